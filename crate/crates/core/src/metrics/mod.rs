//! Evaluation suite: text metrics, participant accuracy, weighted
//! meta-action accuracy, planning L2 and control RMSE, plus the evaluator
//! that joins prediction records with ground truth.

pub mod judge;
pub mod text;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Finding, Result};
use crate::meta_action::MetaActionLabel;
use crate::motion::{parse_motion_response, ControlTuple, TrajectoryWindow, WindowConfig};
use crate::scene_graph::Vocabulary;

pub use judge::{gpt_judge, JudgeOutcome};
pub use text::{score_text_corpus, tokenize, TextEvalPair, TextScores};

pub const STEERING_WEIGHT: f64 = 0.7;
pub const LATERAL_WEIGHT: f64 = 0.15;
pub const LONGITUDINAL_WEIGHT: f64 = 0.15;

/// Sum that does not depend on the order of the terms.
pub(crate) fn stable_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn action_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?i)\b(idle|move straight|slight left|slight right|turn left|turn right)\s*,\s*(decelerating|constant|accelerating)\s+longitudinally\s*,\s*(decelerating|constant|accelerating)\s+laterally\b",
        )
        .unwrap()
    })
}

/// Finds the first canonical meta-action label in free text.
pub fn parse_action_text(text: &str) -> Option<MetaActionLabel> {
    action_re().find(text).and_then(|m| m.as_str().parse().ok())
}

/// Per-sample weighted score in hundredths, so corpus sums stay exact.
fn alpha_hundredths(pred: &MetaActionLabel, truth: &MetaActionLabel) -> u64 {
    let mut s = 0;
    if pred.steering() == truth.steering() {
        s += 70;
    }
    if pred.lateral() == truth.lateral() {
        s += 15;
    }
    if pred.longitudinal() == truth.longitudinal() {
        s += 15;
    }
    s
}

pub fn alpha_score(pred: &MetaActionLabel, truth: &MetaActionLabel) -> f64 {
    alpha_hundredths(pred, truth) as f64 / 100.0
}

/// Weighted meta-action accuracy in percent. A `None` prediction
/// (missing or unparseable) scores 0.
pub fn score_meta_actions(pairs: &[(Option<MetaActionLabel>, MetaActionLabel)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Metric("no meta-action pairs".into()));
    }
    let total: u64 = pairs
        .iter()
        .map(|(p, t)| p.as_ref().map_or(0, |p| alpha_hundredths(p, t)))
        .sum();
    Ok(total as f64 / pairs.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum L2Convention {
    /// Mean error over every point up to the horizon.
    #[default]
    #[serde(rename = "horizon-avg")]
    HorizonAverage,
    /// Error at the horizon point only.
    #[serde(rename = "per-step")]
    PerStep,
}

impl std::str::FromStr for L2Convention {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "horizon-avg" => Ok(L2Convention::HorizonAverage),
            "per-step" => Ok(L2Convention::PerStep),
            other => Err(Error::Config(format!("unknown L2 convention '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanScores {
    pub l2_1s: f64,
    pub l2_2s: f64,
    pub l2_3s: f64,
    pub l2_avg: f64,
}

pub const L2_HORIZONS_S: [f64; 3] = [1.0, 2.0, 3.0];

pub fn score_plans(pairs: &[(TrajectoryWindow, TrajectoryWindow)], convention: L2Convention) -> Result<PlanScores> {
    if pairs.is_empty() {
        return Err(Error::Metric("no trajectory pairs".into()));
    }
    let mut terms: [Vec<f64>; 3] = Default::default();
    for (k, (pred, truth)) in pairs.iter().enumerate() {
        if pred.points.len() != truth.points.len() {
            return Err(Error::Metric(format!(
                "pair {k}: {} predicted points vs {} ground-truth points",
                pred.points.len(),
                truth.points.len()
            )));
        }
        let errors: Vec<f64> = pred.points.iter().zip(&truth.points).map(|(a, b)| a.distance(b)).collect();
        for (h, horizon_terms) in L2_HORIZONS_S.iter().zip(terms.iter_mut()) {
            let n = (h / truth.dt).round() as usize;
            if n == 0 || n > errors.len() {
                return Err(Error::Metric(format!(
                    "pair {k}: horizon {h} s needs {n} points, window has {}",
                    errors.len()
                )));
            }
            horizon_terms.push(match convention {
                L2Convention::HorizonAverage => errors[..n].iter().sum::<f64>() / n as f64,
                L2Convention::PerStep => errors[n - 1],
            });
        }
    }
    let m = pairs.len() as f64;
    let [a, b, c] = terms.map(|t| stable_sum(t) / m);
    Ok(PlanScores {
        l2_1s: a,
        l2_2s: b,
        l2_3s: c,
        l2_avg: (a + b + c) / 3.0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlScores {
    pub rmse_spd: f64,
    pub rmse_ang: f64,
    pub rmse_acc: f64,
    pub rmse_rate: f64,
}

pub fn score_controls(pairs: &[(ControlTuple, ControlTuple)]) -> Result<ControlScores> {
    if pairs.is_empty() {
        return Err(Error::Metric("no control pairs".into()));
    }
    let n = pairs.len() as f64;
    let rmse = |f: fn(&ControlTuple) -> f64| {
        (stable_sum(pairs.iter().map(|(p, t)| (f(p) - f(t)).powi(2)).collect()) / n).sqrt()
    };
    Ok(ControlScores {
        rmse_spd: rmse(|c| c.speed),
        rmse_ang: rmse(|c| c.angle),
        rmse_acc: rmse(|c| c.accel),
        rmse_rate: rmse(|c| c.rate),
    })
}

/// Participant categories named in `text`, in order of appearance.
/// Plurals count as the category.
pub fn participant_mentions(text: &str, vocab: &Vocabulary) -> Vec<String> {
    let mut cats: Vec<&String> = vocab.participant_category.iter().collect();
    // longest first, so "construction vehicle" wins over any shorter overlap
    cats.sort_by_key(|c| std::cmp::Reverse(c.len()));
    let alternation = cats.iter().map(|c| regex::escape(&c.to_lowercase())).collect::<Vec<_>>().join("|");
    if alternation.is_empty() {
        return vec![];
    }
    let re = Regex::new(&format!(r"\b({alternation})(?:s|es)?\b")).unwrap();
    re.captures_iter(&text.to_lowercase()).map(|c| c[1].to_string()).collect()
}

/// Percentage of samples whose predicted participant mentions equal the
/// ground truth's exactly. Samples whose truth names no participant are
/// not counted. Returns `(acc, counted)`.
pub fn score_participant_accuracy(pairs: &[(Option<&str>, &str)], vocab: &Vocabulary) -> Option<(f64, usize)> {
    let mut counted = 0;
    let mut correct = 0;
    for (pred, truth) in pairs {
        let want = participant_mentions(truth, vocab);
        if want.is_empty() {
            continue;
        }
        counted += 1;
        if pred.is_some_and(|p| participant_mentions(p, vocab) == want) {
            correct += 1;
        }
    }
    (counted > 0).then(|| (correct as f64 / counted as f64 * 100.0, counted))
}

/// One prediction (or ground-truth) record of the evaluation file format.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub justification: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub motion_text: Option<String>,
}

/// Parses one record per non-blank line.
pub fn parse_prediction_lines(text: &str) -> Result<Vec<PredictionRecord>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let rec: PredictionRecord = serde_json::from_str(trimmed).map_err(|e| match Error::from_json(e, trimmed.as_bytes()) {
                Error::Parse { offset: o, message } => Error::Parse {
                    offset: offset + (line.len() - line.trim_start().len()) + o,
                    message,
                },
                other => other,
            })?;
            out.push(rec);
        }
        offset += line.len();
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionCounts {
    pub text_pairs: usize,
    pub text_skipped: usize,
    pub acc_samples: usize,
    pub action_samples: usize,
    pub action_unparseable: usize,
    pub plan_pairs: usize,
    pub plan_skipped: usize,
    pub control_pairs: usize,
    pub control_skipped: usize,
    pub unmatched_predictions: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu4: Option<f64>,
    pub rouge_l: Option<f64>,
    pub meteor: Option<f64>,
    pub cider_d: Option<f64>,
    pub acc: Option<f64>,
    pub alpha_acc: Option<f64>,
    pub l2_1s: Option<f64>,
    pub l2_2s: Option<f64>,
    pub l2_3s: Option<f64>,
    pub l2_avg: Option<f64>,
    pub rmse_spd: Option<f64>,
    pub rmse_ang: Option<f64>,
    pub rmse_acc: Option<f64>,
    pub rmse_rate: Option<f64>,
    pub gpt_score: Option<f64>,
    pub l2_convention: L2Convention,
    pub counts: SectionCounts,
}

impl MetricReport {
    fn rows(&self) -> Vec<(&'static str, &'static str, Option<f64>)> {
        vec![
            ("BLEU-4", "x100", self.bleu4),
            ("ROUGE-L", "x100", self.rouge_l),
            ("METEOR", "x100", self.meteor),
            ("CIDEr-D", "x100", self.cider_d),
            ("Acc", "%", self.acc),
            ("alphaAcc", "%", self.alpha_acc),
            ("L2 1s", "m", self.l2_1s),
            ("L2 2s", "m", self.l2_2s),
            ("L2 3s", "m", self.l2_3s),
            ("L2 avg", "m", self.l2_avg),
            ("RMSE speed", "m/s", self.rmse_spd),
            ("RMSE angle", "deg", self.rmse_ang),
            ("RMSE accel", "m/s^2", self.rmse_acc),
            ("RMSE rate", "deg/s", self.rmse_rate),
            ("GPT score", "0-100", self.gpt_score),
        ]
    }

    /// Aligned plain-text table; missing sections print as `-`.
    pub fn to_table(&self) -> String {
        let rows = self.rows();
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        let _ = writeln!(out, "{:<w$}  {:>12}  unit", "metric", "value");
        for (name, unit, v) in rows {
            let value = v.map_or("-".to_string(), |v| format!("{v:.4}"));
            let _ = writeln!(out, "{name:<w$}  {value:>12}  {unit}");
        }
        let c = &self.counts;
        let _ = writeln!(
            out,
            "\ntext pairs {} (skipped {}), acc samples {}, actions {} (unparseable {}), plans {} (skipped {}), controls {} (skipped {}), unmatched predictions {}",
            c.text_pairs,
            c.text_skipped,
            c.acc_samples,
            c.action_samples,
            c.action_unparseable,
            c.plan_pairs,
            c.plan_skipped,
            c.control_pairs,
            c.control_skipped,
            c.unmatched_predictions
        );
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub l2_convention: L2Convention,
    pub windows: WindowConfig,
    pub vocabulary: Vocabulary,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            l2_convention: L2Convention::default(),
            windows: WindowConfig::default(),
            vocabulary: Vocabulary::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: MetricReport,
    pub findings: Vec<Finding>,
}

fn non_empty(s: &Option<String>) -> Option<&str> {
    s.as_deref().filter(|s| !s.trim().is_empty())
}

/// Scores predictions against ground truth, matched by id. Missing or
/// unparseable predictions score 0 for the weighted action accuracy and
/// are skipped (and counted) everywhere else.
pub fn evaluate(predictions: &[PredictionRecord], truth: &[PredictionRecord], opts: &EvalOptions) -> Result<Evaluation> {
    let mut by_id: BTreeMap<&str, &PredictionRecord> = BTreeMap::new();
    for p in predictions {
        if by_id.insert(p.id.as_str(), p).is_some() {
            return Err(Error::Metric(format!("duplicate prediction id '{}'", p.id)));
        }
    }
    let mut truth_sorted: Vec<&PredictionRecord> = truth.iter().collect();
    truth_sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for w in truth_sorted.windows(2) {
        if w[0].id == w[1].id {
            return Err(Error::Metric(format!("duplicate ground-truth id '{}'", w[0].id)));
        }
    }

    let mut findings = Vec::new();
    let mut counts = SectionCounts::default();
    let mut text_pairs = Vec::new();
    let mut acc_pairs: Vec<(Option<&str>, &str)> = Vec::new();
    let mut action_pairs = Vec::new();
    let mut plan_pairs = Vec::new();
    let mut control_pairs = Vec::new();

    for t in &truth_sorted {
        let p = by_id.remove(t.id.as_str());
        for (field, tv, pv) in [
            ("scene_text", &t.scene_text, p.and_then(|p| non_empty(&p.scene_text))),
            ("justification", &t.justification, p.and_then(|p| non_empty(&p.justification))),
        ] {
            let Some(tv) = non_empty(tv) else { continue };
            match pv {
                Some(pv) => text_pairs.push(TextEvalPair {
                    id: format!("{}#{field}", t.id),
                    candidate: pv.to_string(),
                    references: vec![tv.to_string()],
                }),
                None => counts.text_skipped += 1,
            }
        }
        if let Some(tv) = non_empty(&t.scene_text) {
            acc_pairs.push((p.and_then(|p| non_empty(&p.scene_text)), tv));
        }
        if let Some(tv) = non_empty(&t.action_text) {
            match parse_action_text(tv) {
                Some(truth_label) => {
                    let pred = p.and_then(|p| non_empty(&p.action_text)).and_then(parse_action_text);
                    if pred.is_none() {
                        counts.action_unparseable += 1;
                    }
                    action_pairs.push((pred, truth_label));
                }
                None => findings.push(Finding::new(format!("{}.action_text", t.id), "ground truth action is unparseable")),
            }
        }
        if let Some(tv) = non_empty(&t.motion_text) {
            let truth_motion = match parse_motion_response(tv, &opts.windows) {
                Ok(m) => m,
                Err(e) => {
                    findings.push(Finding::new(format!("{}.motion_text", t.id), format!("ground truth: {e}")));
                    continue;
                }
            };
            let pred_motion = p
                .and_then(|p| non_empty(&p.motion_text))
                .map(|s| parse_motion_response(s, &opts.windows));
            match pred_motion {
                Some(Ok(pm)) => {
                    plan_pairs.push((pm.future, truth_motion.future));
                    match (pm.controls.complete(), truth_motion.controls.complete()) {
                        (Some(pc), Some(tc)) => control_pairs.push((pc, tc)),
                        (None, Some(_)) => counts.control_skipped += 1,
                        _ => {}
                    }
                }
                Some(Err(e)) => {
                    findings.push(Finding::new(format!("{}.motion_text", t.id), e.to_string()));
                    counts.plan_skipped += 1;
                    counts.control_skipped += 1;
                }
                None => {
                    counts.plan_skipped += 1;
                    counts.control_skipped += 1;
                }
            }
        }
    }
    for id in by_id.keys() {
        findings.push(Finding::new(*id, "prediction has no ground-truth record"));
    }
    counts.unmatched_predictions = by_id.len();

    let mut report = MetricReport {
        l2_convention: opts.l2_convention,
        ..Default::default()
    };
    counts.text_pairs = text_pairs.len();
    if !text_pairs.is_empty() {
        let s = score_text_corpus(&text_pairs)?;
        report.bleu4 = Some(s.bleu4);
        report.rouge_l = Some(s.rouge_l);
        report.meteor = Some(s.meteor);
        report.cider_d = Some(s.cider_d);
    }
    if let Some((acc, n)) = score_participant_accuracy(&acc_pairs, &opts.vocabulary) {
        report.acc = Some(acc);
        counts.acc_samples = n;
    }
    counts.action_samples = action_pairs.len();
    if !action_pairs.is_empty() {
        report.alpha_acc = Some(score_meta_actions(&action_pairs)?);
    }
    counts.plan_pairs = plan_pairs.len();
    if !plan_pairs.is_empty() {
        let s = score_plans(&plan_pairs, opts.l2_convention)?;
        report.l2_1s = Some(s.l2_1s);
        report.l2_2s = Some(s.l2_2s);
        report.l2_3s = Some(s.l2_3s);
        report.l2_avg = Some(s.l2_avg);
    }
    counts.control_pairs = control_pairs.len();
    if !control_pairs.is_empty() {
        let s = score_controls(&control_pairs)?;
        report.rmse_spd = Some(s.rmse_spd);
        report.rmse_ang = Some(s.rmse_ang);
        report.rmse_acc = Some(s.rmse_acc);
        report.rmse_rate = Some(s.rmse_rate);
    }
    report.counts = counts;
    Ok(Evaluation { report, findings })
}
