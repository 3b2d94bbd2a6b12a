//! Instruction dataset emission, curation patches and the on-disk layout.
//!
//! A dataset directory holds `train.jsonl`, `val.jsonl`, `annotations.jsonl`
//! (scene graph, action label and round provenance per sample, used by the
//! validators), `media/index.jsonl` and `manifest.json`, written last.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::canonical::{fnv1a64, to_canonical_line, to_canonical_pretty};
use crate::config::GlobalConfig;
use crate::error::{Error, Finding, Result};
use crate::ingest::{validate_bundle_with, ScenarioBundle};
use crate::justify::{
    build_justification_prompt, fallback_justification, request_batch, validate_justification_with,
    JustificationRequest,
};
use crate::meta_action::{classify_context, MetaActionLabel};
use crate::metrics::PredictionRecord;
use crate::motion::{bundle_motion_context, controls_line, fmt2, render_motion_text, trajectory_line};
use crate::qa_gen::{Provenance, QARecord, QaLibrary, TaskTag};
use crate::scene_graph::{build_scene_graph, extract_triplets, ElementRef, SceneGraph, Vocabulary};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const MEDIA_INDEX_FILE: &str = "media/index.jsonl";

pub const ACTION_QUESTION: &str = "What meta-action should the ego vehicle take next?";
pub const JUSTIFY_QUESTION: &str = "Why does the ego vehicle take this action?";
pub const CONTROLS_QUESTION: &str = "Give the control signals for the next step.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "Z_sce")]
    Sce,
    #[serde(rename = "Z_act")]
    Act,
    #[serde(rename = "Z_int")]
    Int,
    #[serde(rename = "Z_mot")]
    Mot,
    #[serde(rename = "Z_sig")]
    Sig,
}

impl Task {
    pub const ALL: [Task; 5] = [Task::Sce, Task::Act, Task::Int, Task::Mot, Task::Sig];

    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Sce => "Z_sce",
            Task::Act => "Z_act",
            Task::Int => "Z_int",
            Task::Mot => "Z_mot",
            Task::Sig => "Z_sig",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Patch(format!("unknown task '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Human,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Turn {
    pub role: Role,
    pub task: Task,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Media {
    /// Frame paths, cameras in name order, each camera in time order.
    pub views: Vec<String>,
    pub bev: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstructionSample {
    pub id: String,
    pub media: Media,
    /// Alternating human/assistant turns; one round is one such pair.
    pub conversation: Vec<Turn>,
    pub seed: u64,
    pub scenario_id: String,
}

impl InstructionSample {
    pub fn round_count(&self) -> usize {
        self.conversation.len() / 2
    }

    pub fn answer(&self, round: usize) -> Option<&Turn> {
        self.conversation.get(2 * round + 1)
    }

    pub fn answers(&self, task: Task) -> impl Iterator<Item = &Turn> {
        self.conversation
            .iter()
            .filter(move |t| t.role == Role::Assistant && t.task == task)
    }

    /// Structural checks: alternating roles, one task per round and the
    /// taxonomy order over assistant turns.
    pub fn check_structure(&self) -> Result<()> {
        if self.conversation.len() % 2 != 0 {
            return Err(Error::Integrity(format!("{}: odd number of turns", self.id)));
        }
        for (r, pair) in self.conversation.chunks(2).enumerate() {
            if pair[0].role != Role::Human || pair[1].role != Role::Assistant {
                return Err(Error::Integrity(format!("{}: round {r} is not a human/assistant pair", self.id)));
            }
            if pair[0].task != pair[1].task {
                return Err(Error::Integrity(format!("{}: round {r} mixes tasks", self.id)));
            }
        }
        taxonomy_order(self).map_err(Error::Integrity)
    }
}

fn taxonomy_order(s: &InstructionSample) -> std::result::Result<(), String> {
    let tasks: Vec<Task> = s.answers_all().map(|t| t.task).collect();
    match tasks.windows(2).position(|w| w[0] > w[1]) {
        Some(i) => Err(format!(
            "{}: {} after {} breaks the taxonomy order",
            s.id, tasks[i + 1], tasks[i]
        )),
        None => Ok(()),
    }
}

impl InstructionSample {
    fn answers_all(&self) -> impl Iterator<Item = &Turn> {
        self.conversation.iter().filter(|t| t.role == Role::Assistant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    SceneUnderstanding,
    EndToEnd,
}

impl Stage {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stage::SceneUnderstanding => "scene_understanding",
            Stage::EndToEnd => "end_to_end",
        }
    }

    fn id_suffix(&self) -> &'static str {
        match self {
            Stage::SceneUnderstanding => "su",
            Stage::EndToEnd => "e2e",
        }
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scene_understanding" => Ok(Stage::SceneUnderstanding),
            "end_to_end" => Ok(Stage::EndToEnd),
            _ => Err(Error::Config(format!(
                "unknown stage '{s}', expected scene_understanding or end_to_end"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub fn file_name(&self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Val => "val.jsonl",
        }
    }
}

/// Hash bucketing, so a sample keeps its split as the corpus grows.
pub fn split_of(id: &str, val_fraction: f64) -> Split {
    let bucket = (fnv1a64(id) % 1_000_000) as f64 / 1_000_000.0;
    if bucket < val_fraction {
        Split::Val
    } else {
        Split::Train
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub stage: Stage,
    pub splits: SplitSizes,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub patch_count: usize,
    pub val_fraction: f64,
}

/// Where a round's answer came from, when it was generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundSource {
    pub element: ElementRef,
    pub option_id: String,
    pub phrasing_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleAnnotation {
    pub id: String,
    pub graph: SceneGraph,
    pub action: Option<MetaActionLabel>,
    /// One entry per round; `None` for rounds without a QA provenance.
    pub rounds: Vec<Option<RoundSource>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Sorted by scenario id, then id.
    pub samples: Vec<InstructionSample>,
    /// Parallel to `samples`.
    pub annotations: Vec<SampleAnnotation>,
}

impl Dataset {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.samples.iter().position(|s| s.id == id)
    }

    pub fn get(&self, id: &str) -> Option<(&InstructionSample, &SampleAnnotation)> {
        self.index_of(id).map(|i| (&self.samples[i], &self.annotations[i]))
    }

    /// Passes the annotations through their canonical text form, so the
    /// in-memory value equals what loading the written files gives back.
    fn canonicalize(&mut self) -> Result<()> {
        for a in &mut self.annotations {
            let line = to_canonical_line(&*a)?;
            *a = serde_json::from_str(&line).map_err(|e| Error::from_json(e, line.as_bytes()))?;
        }
        Ok(())
    }

    fn sort(&mut self) {
        let mut pairs: Vec<_> = self.samples.drain(..).zip(self.annotations.drain(..)).collect();
        pairs.sort_by(|a, b| (&a.0.scenario_id, &a.0.id).cmp(&(&b.0.scenario_id, &b.0.id)));
        (self.samples, self.annotations) = pairs.into_iter().unzip();
    }

    fn split_sizes(&self) -> SplitSizes {
        let mut sizes = SplitSizes::default();
        for s in &self.samples {
            match split_of(&s.id, self.manifest.val_fraction) {
                Split::Train => sizes.train += 1,
                Split::Val => sizes.val += 1,
            }
        }
        sizes
    }

    /// Integrity checks shared by loading and emission.
    pub fn check(&self) -> Result<()> {
        if self.samples.len() != self.annotations.len() {
            return Err(Error::Integrity("annotation count differs from sample count".into()));
        }
        let mut ids = BTreeSet::new();
        for (s, a) in self.samples.iter().zip(&self.annotations) {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate sample id '{}'", s.id)));
            }
            if s.id != a.id {
                return Err(Error::Integrity(format!("annotation '{}' does not match sample '{}'", a.id, s.id)));
            }
            if a.rounds.len() != s.round_count() {
                return Err(Error::Integrity(format!("{}: annotation round count mismatch", s.id)));
            }
            s.check_structure()?;
        }
        if self.split_sizes() != self.manifest.splits {
            return Err(Error::Integrity(format!(
                "manifest split sizes {:?} do not match contents {:?}",
                self.manifest.splits,
                self.split_sizes()
            )));
        }
        Ok(())
    }
}

fn media_of(b: &ScenarioBundle) -> Media {
    let mut views = Vec::new();
    for frames in b.views.values() {
        let mut frames = frames.clone();
        frames.sort_by_key(|f| f.timestamp);
        views.extend(frames.into_iter().map(|f| f.path));
    }
    Media {
        views,
        bev: b.bev_map.clone(),
    }
}

fn pair(task: Task, question: String, answer: String) -> [Turn; 2] {
    [
        Turn {
            role: Role::Human,
            task,
            text: question,
        },
        Turn {
            role: Role::Assistant,
            task,
            text: answer,
        },
    ]
}

struct Draft {
    sample: InstructionSample,
    annotation: SampleAnnotation,
    qa: Vec<QARecord>,
    /// Index of the justification round, filled in after the LLM pass.
    int_round: Option<usize>,
}

fn draft(b: &ScenarioBundle, stage: Stage, cfg: &GlobalConfig, lib: &QaLibrary) -> Result<Draft> {
    if let Some(f) = validate_bundle_with(b, &cfg.windows, &cfg.vocabulary).into_iter().next() {
        return Err(Error::validation(format!("{}: {}", b.scenario_id, f.path), f.message));
    }
    let graph = build_scene_graph(&b.elements);
    let qa = lib.generate(b, cfg.seed)?;
    let mut conversation = Vec::new();
    let mut rounds = Vec::new();
    for q in &qa {
        conversation.extend(pair(Task::Sce, q.question.clone(), q.answer.clone()));
        rounds.push(Some(RoundSource {
            element: q.provenance.element,
            option_id: q.provenance.option_id.clone(),
            phrasing_index: q.provenance.phrasing_index,
        }));
    }
    let mut action = None;
    let mut int_round = None;
    if stage == Stage::EndToEnd {
        let ctx = bundle_motion_context(b, &cfg.windows)?;
        let label = classify_context(&ctx, &cfg.thresholds);
        let text = render_motion_text(&ctx, &cfg.background);
        let triplets = extract_triplets(&graph)?;
        conversation.extend(pair(
            Task::Act,
            format!("{}\n{ACTION_QUESTION}", text.system_prompt),
            label.text(),
        ));
        rounds.push(None);
        int_round = Some(rounds.len());
        conversation.extend(pair(
            Task::Int,
            JUSTIFY_QUESTION.to_string(),
            fallback_justification(&label, &triplets),
        ));
        rounds.push(None);
        conversation.extend(pair(
            Task::Mot,
            format!(
                "Plan the ego trajectory for the next {} s at {} s steps.",
                fmt2(cfg.windows.future_s),
                fmt2(cfg.windows.dt)
            ),
            trajectory_line(&ctx.future.points),
        ));
        rounds.push(None);
        conversation.extend(pair(Task::Sig, CONTROLS_QUESTION.to_string(), controls_line(&ctx.target)));
        rounds.push(None);
        action = Some(label);
    }
    let id = format!("{}:{}", b.scenario_id, stage.id_suffix());
    Ok(Draft {
        sample: InstructionSample {
            id: id.clone(),
            media: media_of(b),
            conversation,
            seed: cfg.seed,
            scenario_id: b.scenario_id.clone(),
        },
        annotation: SampleAnnotation {
            id,
            graph,
            action,
            rounds,
        },
        qa,
        int_round,
    })
}

/// Builds the whole dataset in memory. Any generation or validation failure
/// aborts before anything is written.
pub fn emit_dataset(bundles: &[ScenarioBundle], stage: Stage, cfg: &GlobalConfig) -> Result<Dataset> {
    cfg.validate()?;
    let lib = cfg.library()?;
    let mut drafts = bundles
        .par_iter()
        .map(|b| draft(b, stage, cfg, &lib))
        .collect::<Result<Vec<_>>>()?;
    drafts.sort_by(|a, b| (&a.sample.scenario_id, &a.sample.id).cmp(&(&b.sample.scenario_id, &b.sample.id)));

    if let Some(llm) = cfg.llm.as_ref().filter(|l| l.is_configured()) {
        let jobs: Vec<usize> = (0..drafts.len()).filter(|&i| drafts[i].int_round.is_some()).collect();
        let prompts = jobs
            .iter()
            .map(|&i| {
                let d = &drafts[i];
                build_justification_prompt(&JustificationRequest {
                    scene_qa: d.qa.clone(),
                    action: d.annotation.action.clone().expect("end-to-end drafts carry an action"),
                    prompt_template: cfg.justification_template.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let replies = request_batch(llm, &prompts)?;
        for (&i, reply) in jobs.iter().zip(replies) {
            let text = reply?.text.trim().to_string();
            let d = &mut drafts[i];
            let action = d.annotation.action.as_ref().expect("end-to-end drafts carry an action");
            if text.is_empty() || !validate_justification_with(&text, &d.annotation.graph, action, &cfg.vocabulary).is_empty() {
                log::warn!("{}: justification failed validation, keeping the template", d.sample.id);
                continue;
            }
            let r = d.int_round.expect("job list holds end-to-end drafts only");
            d.sample.conversation[2 * r + 1].text = text;
        }
    }

    let mut ds = Dataset {
        manifest: DatasetManifest {
            stage,
            splits: SplitSizes::default(),
            config_hash: cfg.hash()?,
            seed: cfg.seed,
            tool_version: TOOL_VERSION.to_string(),
            patch_count: 0,
            val_fraction: cfg.val_fraction,
        },
        samples: Vec::with_capacity(drafts.len()),
        annotations: Vec::with_capacity(drafts.len()),
    };
    for d in drafts {
        ds.samples.push(d.sample);
        ds.annotations.push(d.annotation);
    }
    ds.manifest.splits = ds.split_sizes();
    ds.canonicalize()?;
    ds.check()?;
    for (s, a) in ds.samples.iter().zip(&ds.annotations) {
        if let Some(f) = validate_sample(s, a, &lib, &cfg.vocabulary).into_iter().next() {
            return Err(Error::Integrity(format!("{}: {f}", s.id)));
        }
    }
    Ok(ds)
}

/// Consistency findings for every generated scene answer, plus the
/// justification checks when the sample has an action.
pub fn validate_sample(
    s: &InstructionSample,
    a: &SampleAnnotation,
    lib: &QaLibrary,
    vocab: &Vocabulary,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    for (r, source) in a.rounds.iter().enumerate() {
        let (Some(q), Some(ans)) = (s.conversation.get(2 * r), s.answer(r)) else {
            continue;
        };
        match (ans.task, source) {
            (Task::Sce, Some(src)) => {
                let record = QARecord {
                    round: r,
                    task_tag: TaskTag::SituationalAwareness,
                    question: q.text.clone(),
                    answer: ans.text.clone(),
                    provenance: Provenance {
                        option_id: src.option_id.clone(),
                        phrasing_index: src.phrasing_index,
                        seed: s.seed,
                        element: src.element,
                    },
                };
                findings.extend(lib.validate_consistency(&record, &a.graph, vocab));
            }
            (Task::Int, _) => {
                if let Some(action) = &a.action {
                    findings.extend(
                        validate_justification_with(&ans.text, &a.graph, action, vocab)
                            .into_iter()
                            .map(|f| Finding::new(format!("round[{r}].{}", f.path), f.message)),
                    );
                }
            }
            _ => {}
        }
    }
    findings
}

/// Ground-truth records in the evaluation file format.
pub fn to_truth_records(ds: &Dataset) -> Vec<PredictionRecord> {
    ds.samples
        .iter()
        .map(|s| {
            let joined = |tasks: &[Task]| {
                let parts: Vec<&str> = s
                    .answers_all()
                    .filter(|t| tasks.contains(&t.task))
                    .map(|t| t.text.as_str())
                    .collect();
                (!parts.is_empty()).then(|| parts.join("\n"))
            };
            PredictionRecord {
                id: s.id.clone(),
                scene_text: joined(&[Task::Sce]),
                action_text: joined(&[Task::Act]),
                justification: joined(&[Task::Int]),
                motion_text: joined(&[Task::Mot, Task::Sig]),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchOp {
    Remove,
    Edit,
    Fill,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurationPatch {
    pub sample_id: String,
    pub round: usize,
    pub op: PatchOp,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<String>,
    pub author: String,
    /// RFC 3339.
    pub timestamp: String,
    #[serde(default)]
    pub note: String,
}

impl CurationPatch {
    pub fn instant(&self) -> Result<DateTime<Utc>> {
        DateTime::parse_from_rfc3339(&self.timestamp)
            .map(|t| t.with_timezone(&Utc))
            .map_err(|e| Error::Patch(format!("bad timestamp '{}': {e}", self.timestamp)))
    }

    pub fn check(&self) -> Result<()> {
        self.instant()?;
        match (self.op, &self.payload) {
            (PatchOp::Remove, Some(_)) => Err(Error::Patch("remove carries no payload".into())),
            (PatchOp::Edit | PatchOp::Fill, None) => {
                Err(Error::Patch(format!("{:?} needs a payload", self.op).to_lowercase()))
            }
            _ => Ok(()),
        }
    }
}

pub fn now_timestamp() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Micros, true)
}

/// Splits a fill payload into (task, question, answer). An optional first
/// line `task: Z_xxx` names the task; the next line is the question and the
/// rest the answer.
fn parse_fill(payload: &str, default_task: Task) -> Result<(Task, String, String)> {
    let mut lines = payload.lines().peekable();
    let mut task = default_task;
    if let Some(t) = lines.peek().and_then(|l| l.strip_prefix("task:")) {
        task = t.trim().parse()?;
        lines.next();
    }
    let question = lines.next().map(str::trim).unwrap_or_default().to_string();
    let answer = lines.collect::<Vec<_>>().join("\n").trim().to_string();
    if question.is_empty() || answer.is_empty() {
        return Err(Error::Patch("fill payload needs a question line and an answer".into()));
    }
    Ok((task, question, answer))
}

fn sorted_patches(patches: &[CurationPatch]) -> Result<Vec<&CurationPatch>> {
    let mut keyed = patches
        .iter()
        .map(|p| {
            p.check()?;
            Ok((p.instant()?, p))
        })
        .collect::<Result<Vec<_>>>()?;
    keyed.sort_by(|(ta, a), (tb, b)| {
        (ta, &a.sample_id, a.round, a.op, &a.payload, &a.author, &a.note)
            .cmp(&(tb, &b.sample_id, b.round, b.op, &b.payload, &b.author, &b.note))
    });
    for w in keyed.windows(2) {
        let (a, b) = (w[0].1, w[1].1);
        if w[0].0 == w[1].0 && a.sample_id == b.sample_id && a.round == b.round {
            return Err(Error::Patch(format!(
                "two patches on {} round {} at {}",
                a.sample_id, a.round, a.timestamp
            )));
        }
    }
    Ok(keyed.into_iter().map(|(_, p)| p).collect())
}

fn apply_one(s: &mut InstructionSample, a: &mut SampleAnnotation, p: &CurationPatch) -> Result<()> {
    let n = s.round_count();
    if p.round >= n {
        return Err(Error::Patch(format!(
            "{}: round {} out of range ({n} rounds)",
            p.sample_id, p.round
        )));
    }
    match p.op {
        PatchOp::Remove => {
            s.conversation.drain(2 * p.round..2 * p.round + 2);
            a.rounds.remove(p.round);
        }
        PatchOp::Edit => {
            s.conversation[2 * p.round + 1].text = p.payload.clone().unwrap_or_default();
        }
        PatchOp::Fill => {
            let current = s.conversation[2 * p.round].task;
            let (task, question, answer) = parse_fill(p.payload.as_deref().unwrap_or_default(), current)?;
            let at = 2 * (p.round + 1);
            s.conversation.splice(at..at, pair(task, question, answer));
            a.rounds.insert(p.round + 1, None);
            taxonomy_order(s).map_err(Error::Patch)?;
        }
    }
    Ok(())
}

/// Applies patches in timestamp order (ties broken by the remaining
/// fields), so the result does not depend on the input order.
pub fn apply_patches(ds: &Dataset, patches: &[CurationPatch]) -> Result<Dataset> {
    let dangling: BTreeSet<&str> = patches
        .iter()
        .filter(|p| ds.index_of(&p.sample_id).is_none())
        .map(|p| p.sample_id.as_str())
        .collect();
    if !dangling.is_empty() {
        return Err(Error::Patch(format!(
            "unknown sample ids: {}",
            dangling.into_iter().collect::<Vec<_>>().join(", ")
        )));
    }
    let mut out = ds.clone();
    let index: BTreeMap<String, usize> = out.samples.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
    for p in sorted_patches(patches)? {
        let i = index[&p.sample_id];
        apply_one(&mut out.samples[i], &mut out.annotations[i], p)?;
    }
    out.manifest.patch_count += patches.len();
    out.check()?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordStatus {
    Pending,
    Curated,
    Rejected,
}

impl FromStr for RecordStatus {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pending" => Ok(RecordStatus::Pending),
            "curated" => Ok(RecordStatus::Curated),
            "rejected" => Ok(RecordStatus::Rejected),
            _ => Err(Error::Config(format!("unknown status '{s}'"))),
        }
    }
}

/// Status of one sample given its own patches: pending without any,
/// rejected when removes leave it with no rounds, curated otherwise.
pub fn record_status(original: &InstructionSample, patched: &InstructionSample, patches: &[&CurationPatch]) -> RecordStatus {
    if patches.is_empty() {
        RecordStatus::Pending
    } else if original.round_count() > 0
        && patched.round_count() == 0
        && patches.iter().any(|p| p.op == PatchOp::Remove)
    {
        RecordStatus::Rejected
    } else {
        RecordStatus::Curated
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<CurationPatch>> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(e.into()),
    };
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let p: CurationPatch = serde_json::from_str(line)
            .map_err(|e| Error::Patch(format!("{} line {}: {e}", path.display(), n + 1)))?;
        out.push(p);
    }
    Ok(out)
}

/// Appends one record by rewriting the ledger to a temporary file and
/// renaming it over the original.
pub fn append_patch(path: &Path, patch: &CurationPatch) -> Result<()> {
    patch.check()?;
    let mut bytes = match std::fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
        Err(e) => return Err(e.into()),
    };
    if !bytes.is_empty() && !bytes.ends_with(b"\n") {
        bytes.push(b'\n');
    }
    bytes.extend_from_slice(to_canonical_line(patch)?.as_bytes());
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp.{}", std::process::id()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&to_canonical_line(&item)?);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Serialize)]
struct MediaIndexLine<'a> {
    id: &'a str,
    views: &'a [String],
    bev: &'a str,
}

/// Writes the dataset tree; the manifest goes last.
pub fn write_dataset(dir: &Path, ds: &Dataset) -> Result<()> {
    ds.check()?;
    std::fs::create_dir_all(dir.join("media"))?;
    for split in [Split::Train, Split::Val] {
        let text = jsonl(
            ds.samples
                .iter()
                .filter(|s| split_of(&s.id, ds.manifest.val_fraction) == split),
        )?;
        std::fs::write(dir.join(split.file_name()), text)?;
    }
    std::fs::write(dir.join(ANNOTATIONS_FILE), jsonl(&ds.annotations)?)?;
    std::fs::write(
        dir.join(MEDIA_INDEX_FILE),
        jsonl(ds.samples.iter().map(|s| MediaIndexLine {
            id: &s.id,
            views: &s.media.views,
            bev: &s.media.bev,
        }))?,
    )?;
    let mut manifest = to_canonical_pretty(&ds.manifest)?;
    manifest.push('\n');
    write_atomic(&dir.join(MANIFEST_FILE), manifest.as_bytes())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", path.display())))?;
    let mut out = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(line).map_err(|e| match Error::from_json(e, line.as_bytes()) {
                Error::Parse { offset: o, message } => Error::Parse {
                    offset: offset + o,
                    message: format!("{}: {message}", path.display()),
                },
                other => other,
            })?);
        }
        offset += line.len();
    }
    Ok(out)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let bytes = std::fs::read(&manifest_path)
        .map_err(|e| Error::Integrity(format!("cannot read {}: {e}", manifest_path.display())))?;
    let manifest: DatasetManifest = serde_json::from_slice(&bytes).map_err(|e| Error::from_json(e, &bytes))?;
    let mut samples = Vec::new();
    for split in [Split::Train, Split::Val] {
        for s in read_jsonl::<InstructionSample>(&dir.join(split.file_name()))? {
            if split_of(&s.id, manifest.val_fraction) != split {
                return Err(Error::Integrity(format!("{} is in the wrong split file", s.id)));
            }
            samples.push(s);
        }
    }
    let mut annotations: BTreeMap<String, SampleAnnotation> = BTreeMap::new();
    for a in read_jsonl::<SampleAnnotation>(&dir.join(ANNOTATIONS_FILE))? {
        if let Some(dup) = annotations.insert(a.id.clone(), a) {
            return Err(Error::Integrity(format!("duplicate annotation id '{}'", dup.id)));
        }
    }
    let mut ids = BTreeSet::new();
    let mut ordered = Vec::with_capacity(samples.len());
    for s in &samples {
        if !ids.insert(s.id.clone()) {
            return Err(Error::Integrity(format!("duplicate sample id '{}'", s.id)));
        }
        let a = annotations
            .remove(&s.id)
            .ok_or_else(|| Error::Integrity(format!("no annotation for '{}'", s.id)))?;
        ordered.push(a);
    }
    if let Some(extra) = annotations.keys().next() {
        return Err(Error::Integrity(format!("annotation '{extra}' has no sample")));
    }
    let mut ds = Dataset {
        manifest,
        samples,
        annotations: ordered,
    };
    ds.sort();
    ds.check()?;
    Ok(ds)
}

/// Default ledger location next to a dataset directory.
pub fn default_ledger_path(dataset_dir: &Path) -> PathBuf {
    dataset_dir.join("patches.jsonl")
}
