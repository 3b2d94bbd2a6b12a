use forge_core::metrics::{score_text_corpus, TextEvalPair};
use serde::Deserialize;

#[derive(Deserialize)]
struct Expected {
    bleu4: f64,
    rouge_l: f64,
    meteor: f64,
    cider_d: f64,
}

const TOL: f64 = 1e-4;

#[test]
fn fixture_corpus_matches_reference_run() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/text_metrics");
    let pairs: Vec<TextEvalPair> =
        serde_json::from_str(&std::fs::read_to_string(format!("{dir}/corpus.json")).unwrap()).unwrap();
    let want: Expected =
        serde_json::from_str(&std::fs::read_to_string(format!("{dir}/expected.json")).unwrap()).unwrap();
    let got = score_text_corpus(&pairs).unwrap();
    for (name, g, w) in [
        ("bleu4", got.bleu4, want.bleu4),
        ("rouge_l", got.rouge_l, want.rouge_l),
        ("meteor", got.meteor, want.meteor),
        ("cider_d", got.cider_d, want.cider_d),
    ] {
        assert!((g - w).abs() <= TOL, "{name}: got {g}, reference {w}");
    }
}
