use std::collections::BTreeMap;
use std::path::PathBuf;

use forge_core::ingest::{load_bundle_dir, parse_scenario_bundle, serialize_bundle};
use forge_core::meta_action::{classify_meta_action, ThresholdSpace};
use forge_core::motion::WindowConfig;
use forge_core::scene_graph::Vocabulary;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn corpus_round_trips_byte_identically() {
    let dir = fixtures().join("scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let b = parse_scenario_bundle(text.as_bytes()).unwrap();
        assert_eq!(serialize_bundle(&b).unwrap(), text, "{}", path.display());
        n += 1;
    }
    assert_eq!(n, 20);
}

#[test]
fn labels_match_hand_derivation() {
    let bundles = load_bundle_dir(&fixtures().join("scenarios"), &WindowConfig::default(), &Vocabulary::default()).unwrap();
    let expected: BTreeMap<String, String> =
        serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected/labels.json")).unwrap()).unwrap();
    assert_eq!(bundles.len(), expected.len());
    let mut wrong = Vec::new();
    for b in &bundles {
        let got = classify_meta_action(b, &ThresholdSpace::default(), &WindowConfig::default()).unwrap().text();
        if got != expected[&b.scenario_id] {
            wrong.push(format!("{}: got '{got}', want '{}'", b.scenario_id, expected[&b.scenario_id]));
        }
    }
    assert!(wrong.is_empty(), "{wrong:#?}");
}

mod emission {
    use super::*;
    use forge_core::config::GlobalConfig;
    use forge_core::emit::{emit_dataset, to_truth_records, validate_sample, write_dataset, Role, Stage};
    use forge_core::metrics::{evaluate, EvalOptions};
    use forge_core::qa_gen::QaLibrary;

    fn cfg() -> GlobalConfig {
        GlobalConfig {
            seed: 7,
            ..Default::default()
        }
    }

    fn corpus() -> Vec<forge_core::ingest::ScenarioBundle> {
        load_bundle_dir(&fixtures().join("scenarios"), &WindowConfig::default(), &Vocabulary::default()).unwrap()
    }

    #[test]
    fn end_to_end_task_sequences_match_golden() {
        let ds = emit_dataset(&corpus(), Stage::EndToEnd, &cfg()).unwrap();
        let golden: BTreeMap<String, Vec<String>> =
            serde_json::from_str(&std::fs::read_to_string(fixtures().join("expected/e2e_tasks.json")).unwrap()).unwrap();
        assert_eq!(ds.samples.len(), 20);
        for s in &ds.samples {
            let tasks: Vec<String> = s
                .conversation
                .iter()
                .filter(|t| t.role == Role::Assistant)
                .map(|t| t.task.to_string())
                .collect();
            assert_eq!(&tasks, &golden[&s.id], "{}", s.id);
        }
    }

    #[test]
    fn every_answer_passes_validators() {
        let lib = QaLibrary::default();
        let vocab = Vocabulary::default();
        for stage in [Stage::SceneUnderstanding, Stage::EndToEnd] {
            let ds = emit_dataset(&corpus(), stage, &cfg()).unwrap();
            for (s, a) in ds.samples.iter().zip(&ds.annotations) {
                let f = validate_sample(s, a, &lib, &vocab);
                assert!(f.is_empty(), "{}: {f:?}", s.id);
            }
        }
    }

    #[test]
    fn ground_truth_scores_perfectly() {
        let ds = emit_dataset(&corpus(), Stage::EndToEnd, &cfg()).unwrap();
        let truth = to_truth_records(&ds);
        let r = evaluate(&truth, &truth, &EvalOptions::default()).unwrap().report;
        assert_eq!(r.alpha_acc, Some(100.0));
        assert_eq!(r.bleu4, Some(100.0));
        assert_eq!(r.rouge_l, Some(100.0));
        assert!(r.meteor.unwrap() > 99.0);
        for v in [r.l2_1s, r.l2_2s, r.l2_3s, r.l2_avg, r.rmse_spd, r.rmse_ang, r.rmse_acc, r.rmse_rate] {
            assert_eq!(v, Some(0.0));
        }
    }

    #[test]
    fn emission_is_byte_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_dataset(a.path(), &emit_dataset(&corpus(), Stage::EndToEnd, &cfg()).unwrap()).unwrap();
        write_dataset(b.path(), &emit_dataset(&corpus(), Stage::EndToEnd, &cfg()).unwrap()).unwrap();
        for f in ["train.jsonl", "val.jsonl", "annotations.jsonl", "media/index.jsonl", "manifest.json"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
    }
}

