//! Optional LLM judge: asks an endpoint to rate each candidate against its
//! references on a 0..100 scale.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::text::TextEvalPair;
use crate::error::{Error, Finding, Result};
use crate::justify::{request_batch, LlmEndpointConfig};

pub const JUDGE_PROMPT: &str = "Rate how well the candidate answer matches the reference answer(s) \
in meaning and correctness, on a scale from 0 (unrelated or wrong) to 100 (equivalent). \
Reply with the number only.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeOutcome {
    /// Mean rating over rated pairs; `None` when nothing could be rated.
    pub score: Option<f64>,
    pub rated: usize,
    pub findings: Vec<Finding>,
}

pub fn judge_prompt(p: &TextEvalPair) -> String {
    let refs = p
        .references
        .iter()
        .enumerate()
        .map(|(i, r)| format!("Reference {}: {r}", i + 1))
        .collect::<Vec<_>>()
        .join("\n");
    format!("{JUDGE_PROMPT}\n\n{refs}\nCandidate: {}", p.candidate)
}

/// First number in the reply, if it lies in 0..=100.
pub fn parse_rating(reply: &str) -> Option<f64> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"-?\d+(?:\.\d+)?").unwrap());
    let v: f64 = re.find(reply)?.as_str().parse().ok()?;
    (0.0..=100.0).contains(&v).then_some(v)
}

pub fn gpt_judge(pairs: &[TextEvalPair], cfg: &LlmEndpointConfig) -> Result<JudgeOutcome> {
    if !cfg.is_configured() {
        return Err(Error::Config("judge requires a configured endpoint".into()));
    }
    let prompts: Vec<String> = pairs.iter().map(judge_prompt).collect();
    let replies = request_batch(cfg, &prompts)?;
    let mut ratings = Vec::new();
    let mut findings = Vec::new();
    for (p, reply) in pairs.iter().zip(replies) {
        let reply = reply?;
        match parse_rating(&reply.text) {
            Some(v) => ratings.push(v),
            None => findings.push(Finding::new(p.id.clone(), format!("unrateable judge reply: '{}'", reply.text))),
        }
    }
    let rated = ratings.len();
    Ok(JudgeOutcome {
        score: (rated > 0).then(|| super::stable_sum(ratings) / rated as f64),
        rated,
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_support::{ok_body, stub};

    #[test]
    fn rating_parse() {
        assert_eq!(parse_rating("85"), Some(85.0));
        assert_eq!(parse_rating("Score: 72.5 / 100"), Some(72.5));
        assert_eq!(parse_rating("The answer is fine."), None);
        assert_eq!(parse_rating("250"), None);
    }

    fn pairs(n: usize) -> Vec<TextEvalPair> {
        (0..n)
            .map(|i| TextEvalPair {
                id: format!("p{i}"),
                candidate: "The car stops.".into(),
                references: vec!["The car halts.".into()],
            })
            .collect()
    }

    fn cfg(url: String) -> LlmEndpointConfig {
        std::env::set_var("FORGE_TEST_JUDGE_KEY", "k");
        LlmEndpointConfig {
            base_url: url,
            api_key_env_var: "FORGE_TEST_JUDGE_KEY".into(),
            timeout_s: 5.0,
            concurrency: 1,
            ..Default::default()
        }
    }

    #[test]
    fn stub_always_100() {
        let (url, _) = stub(vec![(200, ok_body("100")); 3]);
        let r = gpt_judge(&pairs(3), &cfg(url)).unwrap();
        assert_eq!(r.score, Some(100.0));
        assert_eq!(r.rated, 3);
    }

    #[test]
    fn stub_alternating_mean() {
        let replies = ["80", "60", "80", "60"].map(|s| (200, ok_body(s))).to_vec();
        let (url, _) = stub(replies);
        let r = gpt_judge(&pairs(4), &cfg(url)).unwrap();
        assert_eq!(r.score, Some(70.0));
    }

    #[test]
    fn prose_reply_skipped() {
        let (url, _) = stub(vec![(200, ok_body("90")), (200, ok_body("It is quite good."))]);
        let r = gpt_judge(&pairs(2), &cfg(url)).unwrap();
        assert_eq!(r.score, Some(90.0));
        assert_eq!(r.rated, 1);
        assert_eq!(r.findings.len(), 1);
        assert_eq!(r.findings[0].path, "p1");
    }

    #[test]
    fn unconfigured_endpoint_refused() {
        let pairs = vec![TextEvalPair {
            id: "a".into(),
            candidate: "x".into(),
            references: vec!["y".into()],
        }];
        assert!(matches!(gpt_judge(&pairs, &LlmEndpointConfig::default()), Err(Error::Config(_))));
    }
}
