//! Scene-understanding QA: question sets with synonymous phrasings, answer
//! templates bound to scene-graph triplets, seeded round generation and a
//! consistency check of answers against the graph.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::canonical::fnv1a64;
use crate::error::{Error, Finding, Result};
use crate::ingest::ScenarioBundle;
use crate::scene_graph::{build_scene_graph, extract_triplets, ElementKind, ElementRef, SceneGraph, Triplet, Vocabulary};

const DEFAULT_LIBRARY: &str = include_str!("../assets/qa_library.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskTag {
    #[serde(rename = "situational awareness")]
    SituationalAwareness,
    #[serde(rename = "object recognition")]
    ObjectRecognition,
    #[serde(rename = "tracking")]
    Tracking,
    #[serde(rename = "spatial localization")]
    SpatialLocalization,
}

impl TaskTag {
    pub const ALL: [TaskTag; 4] = [
        TaskTag::SituationalAwareness,
        TaskTag::ObjectRecognition,
        TaskTag::Tracking,
        TaskTag::SpatialLocalization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TaskTag::SituationalAwareness => "situational awareness",
            TaskTag::ObjectRecognition => "object recognition",
            TaskTag::Tracking => "tracking",
            TaskTag::SpatialLocalization => "spatial localization",
        }
    }
}

impl fmt::Display for TaskTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TaskTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskTag::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Library(format!("unknown task tag '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionOption {
    pub option_id: String,
    pub phrasings: Vec<String>,
    pub targets: Vec<String>,
    pub task_tag: TaskTag,
    pub template: String,
    #[serde(default)]
    pub guard: Vec<String>,
}

impl QuestionOption {
    pub fn answer_template(&self) -> AnswerTemplate {
        AnswerTemplate {
            option_id: self.option_id.clone(),
            text: self.template.clone(),
            guard: self.guard.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuestionSet {
    pub element: ElementKind,
    pub options: Vec<QuestionOption>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerTemplate {
    pub option_id: String,
    /// Text with `{element.attribute}` placeholders.
    pub text: String,
    /// `element.attribute` names that must be present before instantiation.
    pub guard: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub option_id: String,
    pub phrasing_index: usize,
    pub seed: u64,
    pub element: ElementRef,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QARecord {
    pub round: usize,
    pub task_tag: TaskTag,
    pub question: String,
    pub answer: String,
    pub provenance: Provenance,
}

fn placeholder_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{([a-z_]+)\.([a-z_]+)\}").unwrap())
}

fn split_name(name: &str) -> Option<(ElementKind, &str)> {
    let (k, a) = name.split_once('.')?;
    Some((k.parse().ok()?, a))
}

fn lookup<'a>(triplets: &'a [Triplet], kind: &str, attribute: &str) -> Option<&'a Triplet> {
    triplets
        .iter()
        .find(|t| t.element.kind().as_str() == kind && t.attribute.name == attribute)
}

/// Replaces every placeholder with the matching triplet value. Triplets are
/// expected to be scoped to one element per kind; the first match wins.
fn fill(text: &str, triplets: &[Triplet]) -> Result<String> {
    let re = placeholder_re();
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for c in re.captures_iter(text) {
        let m = c.get(0).unwrap();
        let t = lookup(triplets, &c[1], &c[2])
            .ok_or_else(|| Error::UnboundPlaceholder(format!("{}.{}", &c[1], &c[2])))?;
        out.push_str(&text[last..m.start()]);
        out.push_str(&t.attribute.value);
        last = m.end();
    }
    out.push_str(&text[last..]);
    if re.replace_all(text, "").contains(['{', '}']) {
        return Err(Error::Template(format!("malformed placeholder in '{text}'")));
    }
    Ok(out)
}

pub fn instantiate_answer(t: &AnswerTemplate, triplets: &[Triplet]) -> Result<String> {
    for g in &t.guard {
        let (kind, attr) = g
            .split_once('.')
            .ok_or_else(|| Error::Template(format!("bad guard '{g}'")))?;
        if lookup(triplets, kind, attr).is_none() {
            return Err(Error::UnboundPlaceholder(g.clone()));
        }
    }
    fill(&t.text, triplets)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaLibrary {
    sets: Vec<QuestionSet>,
}

impl Default for QaLibrary {
    fn default() -> Self {
        QaLibrary::from_str(DEFAULT_LIBRARY).expect("bundled question library is valid")
    }
}

impl FromStr for QaLibrary {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let sets: Vec<QuestionSet> = serde_json::from_str(text).map_err(|e| Error::from_json(e, text.as_bytes()))?;
        let lib = QaLibrary { sets };
        let findings = lib.validate();
        if let Some(f) = findings.into_iter().next() {
            return Err(Error::Library(f.to_string()));
        }
        Ok(lib)
    }
}

impl QaLibrary {
    pub fn load(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    pub fn sets(&self) -> &[QuestionSet] {
        &self.sets
    }

    pub fn set(&self, kind: ElementKind) -> Option<&QuestionSet> {
        self.sets.iter().find(|s| s.element == kind)
    }

    pub fn option(&self, option_id: &str) -> Option<(ElementKind, &QuestionOption)> {
        self.sets.iter().find_map(|s| {
            s.options
                .iter()
                .find(|o| o.option_id == option_id)
                .map(|o| (s.element, o))
        })
    }

    pub fn validate(&self) -> Vec<Finding> {
        let mut findings = Vec::new();
        let mut kinds = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for (si, set) in self.sets.iter().enumerate() {
            let kind = set.element;
            if !kinds.insert(kind) {
                findings.push(Finding::new(format!("[{si}].element"), format!("duplicate set for {}", kind.as_str())));
            }
            let known = kind.attribute_names();
            for (oi, o) in set.options.iter().enumerate() {
                let path = format!("[{si}].options[{oi}]");
                if !ids.insert(o.option_id.clone()) {
                    findings.push(Finding::new(format!("{path}.option_id"), format!("duplicate option id '{}'", o.option_id)));
                }
                if o.phrasings.len() < 2 {
                    findings.push(Finding::new(format!("{path}.phrasings"), "fewer than 2 phrasings"));
                }
                let distinct: BTreeSet<&String> = o.phrasings.iter().collect();
                if distinct.len() != o.phrasings.len() {
                    findings.push(Finding::new(format!("{path}.phrasings"), "phrasings are not distinct"));
                }
                if o.phrasings.iter().any(|p| p.trim().is_empty()) || o.template.trim().is_empty() {
                    findings.push(Finding::new(path.clone(), "empty phrasing or template"));
                }
                for t in &o.targets {
                    if !known.contains(&t.as_str()) {
                        findings.push(Finding::new(format!("{path}.targets"), format!("unknown attribute '{t}'")));
                    }
                }
                let check_name = |field: &str, name: &str| match split_name(name) {
                    Some((k, a)) if k == kind && known.contains(&a) => None,
                    _ => Some(Finding::new(
                        format!("{path}.{field}"),
                        format!("'{name}' is not an attribute of {}", kind.as_str()),
                    )),
                };
                for g in &o.guard {
                    findings.extend(check_name("guard", g));
                }
                for text in o.phrasings.iter().chain(std::iter::once(&o.template)) {
                    for c in placeholder_re().captures_iter(text) {
                        findings.extend(check_name("template", &format!("{}.{}", &c[1], &c[2])));
                    }
                    let stripped = placeholder_re().replace_all(text, "");
                    if stripped.contains(['{', '}']) {
                        findings.push(Finding::new(format!("{path}.template"), format!("malformed placeholder in '{text}'")));
                    }
                }
            }
        }
        findings
    }

    /// One QA round per applicable option, elements in triplet order.
    pub fn generate(&self, b: &ScenarioBundle, seed: u64) -> Result<Vec<QARecord>> {
        let triplets = extract_triplets(&build_scene_graph(&b.elements))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(&b.scenario_id));
        let mut records = Vec::new();
        let mut start = 0;
        while start < triplets.len() {
            let element = triplets[start].element;
            let end = start + triplets[start..].iter().take_while(|t| t.element == element).count();
            let scoped = &triplets[start..end];
            start = end;
            let Some(set) = self.set(element.kind()) else {
                continue;
            };
            for o in &set.options {
                let applicable = o.guard.iter().all(|g| {
                    g.split_once('.')
                        .is_some_and(|(k, a)| lookup(scoped, k, a).is_some())
                });
                if !applicable {
                    continue;
                }
                let phrasing_index = rng.random_range(0..o.phrasings.len() as u32) as usize;
                let question = fill(&o.phrasings[phrasing_index], scoped)?;
                let answer = instantiate_answer(&o.answer_template(), scoped)?;
                records.push(QARecord {
                    round: records.len(),
                    task_tag: o.task_tag,
                    question,
                    answer,
                    provenance: Provenance {
                        option_id: o.option_id.clone(),
                        phrasing_index,
                        seed,
                        element,
                    },
                });
            }
        }
        Ok(records)
    }

    /// Checks every attribute value an answer asserts against the triplets of
    /// the element it is about.
    pub fn validate_consistency(&self, q: &QARecord, g: &SceneGraph, vocab: &Vocabulary) -> Vec<Finding> {
        let path = format!("round[{}]", q.round);
        let triplets = match extract_triplets(g) {
            Ok(t) => t,
            Err(e) => return vec![Finding::new(path, e.to_string())],
        };
        let element = q.provenance.element;
        let scoped: Vec<&Triplet> = triplets.iter().filter(|t| t.element == element).collect();
        if scoped.is_empty() {
            return vec![Finding::new(path, format!("element {element} not in scene graph"))];
        }
        let values: BTreeSet<&str> = scoped.iter().map(|t| t.attribute.value.as_str()).collect();

        if let Some((_, o)) = self.option(&q.provenance.option_id) {
            if let Some(captured) = match_template(&o.template, &q.answer) {
                return captured
                    .into_iter()
                    .filter(|v| !values.contains(v.as_str()))
                    .map(|v| Finding::new(path.clone(), format!("value '{v}' not in scene graph")))
                    .collect();
            }
        }

        // Free text: any closed-vocabulary value of this element kind that the
        // answer mentions must be one of the element's values.
        let lower = q.answer.to_lowercase();
        let mut findings = Vec::new();
        for attr in element.kind().attribute_names() {
            let Some(closed) = vocab.closed_values(element.kind(), attr) else {
                continue;
            };
            for v in closed {
                if mentions(&lower, v) && !values.contains(v.as_str()) {
                    findings.push(Finding::new(path.clone(), format!("value '{v}' not in scene graph")));
                }
            }
        }
        findings
    }
}

fn mentions(haystack: &str, word: &str) -> bool {
    let re = Regex::new(&format!(r"\b{}\b", regex::escape(&word.to_lowercase()))).unwrap();
    re.is_match(haystack)
}

/// Matches `answer` against a template, returning the text bound to each
/// placeholder, or `None` if the fixed text differs.
fn match_template(template: &str, answer: &str) -> Option<Vec<String>> {
    let mut pattern = String::from("^");
    let mut last = 0;
    for m in placeholder_re().find_iter(template) {
        pattern.push_str(&regex::escape(&template[last..m.start()]));
        pattern.push_str("(.+?)");
        last = m.end();
    }
    pattern.push_str(&regex::escape(&template[last..]));
    pattern.push('$');
    let re = Regex::new(&pattern).ok()?;
    let c = re.captures(answer)?;
    Some(c.iter().skip(1).flatten().map(|m| m.as_str().to_string()).collect())
}

pub fn default_library() -> &'static QaLibrary {
    static LIB: OnceLock<QaLibrary> = OnceLock::new();
    LIB.get_or_init(QaLibrary::default)
}

/// Rounds from the bundled question library.
pub fn generate_scene_rounds(b: &ScenarioBundle, seed: u64) -> Result<Vec<QARecord>> {
    default_library().generate(b, seed)
}

/// Consistency check against the bundled library and vocabulary.
pub fn validate_consistency(q: &QARecord, g: &SceneGraph) -> Vec<Finding> {
    default_library().validate_consistency(q, g, &Vocabulary::default())
}
