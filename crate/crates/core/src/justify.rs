//! Behavior justifications: prompt construction, a chat-completion client
//! with retries, an offline template fallback and a lexical validator.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Mutex, OnceLock};
use std::time::Duration;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::canonical::to_canonical_line;
use crate::error::{Error, Finding, Result};
use crate::meta_action::{MetaActionLabel, SpeedLevel, SteeringLevel};
use crate::qa_gen::QARecord;
use crate::scene_graph::{extract_triplets, ElementRef, SceneGraph, Triplet, Vocabulary};

pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are an experienced driver reviewing a driving scene.\n\
Scene description:\n{context}\n\n\
The ego vehicle's next meta-action is: {action}.\n\n\
In one or two sentences, explain why the ego vehicle takes this action. \
Refer only to objects that appear in the scene description.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlmEndpointConfig {
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env_var: String,
    pub timeout_s: f64,
    pub max_retries: u32,
    pub temperature: f64,
    pub concurrency: usize,
    /// First backoff delay; doubles on every retry.
    pub backoff_base_s: f64,
    pub audit_log: Option<PathBuf>,
}

impl Default for LlmEndpointConfig {
    fn default() -> Self {
        LlmEndpointConfig {
            base_url: String::new(),
            model_name: "gpt-3.5-turbo".into(),
            api_key_env_var: "OPENAI_API_KEY".into(),
            timeout_s: 60.0,
            max_retries: 3,
            temperature: 0.2,
            concurrency: 4,
            backoff_base_s: 1.0,
            audit_log: None,
        }
    }
}

impl LlmEndpointConfig {
    pub fn is_configured(&self) -> bool {
        !self.base_url.trim().is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return Err(Error::Config("timeout_s must be positive".into()));
        }
        if self.concurrency == 0 {
            return Err(Error::Config("concurrency must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::Config("temperature must be non-negative".into()));
        }
        if !(self.backoff_base_s >= 0.0 && self.backoff_base_s.is_finite()) {
            return Err(Error::Config("backoff_base_s must be non-negative".into()));
        }
        if self.api_key_env_var.trim().is_empty() {
            return Err(Error::Config("api_key_env_var is empty".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JustificationRequest {
    pub scene_qa: Vec<QARecord>,
    pub action: MetaActionLabel,
    pub prompt_template: String,
}

fn slot_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\{(context|action)\}").unwrap())
}

pub fn check_prompt_template(template: &str) -> Result<()> {
    for slot in ["{context}", "{action}"] {
        if !template.contains(slot) {
            return Err(Error::Template(format!("prompt template has no {slot} slot")));
        }
    }
    Ok(())
}

/// Renders QA rounds in round order as `Q: ...` / `A: ...` lines.
pub fn render_context(qa: &[QARecord]) -> String {
    let mut rounds: Vec<&QARecord> = qa.iter().collect();
    rounds.sort_by_key(|q| q.round);
    rounds
        .iter()
        .map(|q| format!("Q: {}\nA: {}", q.question, q.answer))
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn build_justification_prompt(r: &JustificationRequest) -> Result<String> {
    check_prompt_template(&r.prompt_template)?;
    let context = render_context(&r.scene_qa);
    let action = r.action.text();
    // single pass, so slot-like text inside the context is left alone
    Ok(slot_re()
        .replace_all(&r.prompt_template, |c: &regex::Captures| match &c[1] {
            "context" => context.clone(),
            _ => action.clone(),
        })
        .into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JustificationResponse {
    pub text: String,
    pub attempts: u32,
}

fn audit(cfg: &LlmEndpointConfig, key: &str, entry: Value) {
    static LOCK: Mutex<()> = Mutex::new(());
    let Some(path) = &cfg.audit_log else {
        return;
    };
    let mut entry = entry;
    entry["timestamp"] = json!(chrono::Utc::now().to_rfc3339());
    let Ok(mut line) = to_canonical_line(&entry) else {
        return;
    };
    if !key.is_empty() {
        line = line.replace(key, "[REDACTED]");
    }
    let _guard = LOCK.lock();
    if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(path) {
        let _ = writeln!(f, "{line}");
    }
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

fn completion_text(body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Serialize(format!("malformed completion response: {e}")))?;
    v.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Serialize("completion response has no choices[0].message.content".into()))
}

/// Sends one chat-completion request, retrying 429, 5xx and transport
/// failures with exponential backoff.
pub fn request_justification(cfg: &LlmEndpointConfig, prompt: &str) -> Result<JustificationResponse> {
    cfg.validate()?;
    if !cfg.is_configured() {
        return Err(Error::Config("no endpoint base_url configured".into()));
    }
    let key = std::env::var(&cfg.api_key_env_var)
        .map_err(|_| Error::Config(format!("environment variable {} is not set", cfg.api_key_env_var)))?;

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_s)))
        .http_status_as_error(false)
        .build()
        .into();
    let url = format!("{}/chat/completions", cfg.base_url.trim_end_matches('/'));
    let body = json!({
        "model": cfg.model_name,
        "messages": [{"role": "user", "content": prompt}],
        "temperature": cfg.temperature,
    });
    let payload = serde_json::to_string(&body).map_err(|e| Error::Serialize(e.to_string()))?;

    let max_attempts = cfg.max_retries + 1;
    let mut attempt = 0;
    loop {
        attempt += 1;
        let result = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(&payload)
            .and_then(|mut resp| {
                let status = resp.status().as_u16();
                resp.body_mut().read_to_string().map(|text| (status, text))
            });
        let retry_reason = match result {
            Ok((status, text)) => {
                audit(cfg, &key, json!({"url": url, "attempt": attempt, "request": body, "status": status, "response": text}));
                if (200..300).contains(&status) {
                    return Ok(JustificationResponse {
                        text: completion_text(&text)?,
                        attempts: attempt,
                    });
                }
                if !retryable(status) || attempt >= max_attempts {
                    return Err(Error::HttpStatus { status, body: text });
                }
                format!("status {status}")
            }
            Err(e) => {
                let message = e.to_string().replace(&key, "[REDACTED]");
                audit(cfg, &key, json!({"url": url, "attempt": attempt, "request": body, "error": message}));
                if attempt >= max_attempts {
                    return Err(Error::Transport {
                        attempts: attempt,
                        message,
                    });
                }
                message
            }
        };
        let delay = cfg.backoff_base_s * 2f64.powi(attempt as i32 - 1);
        log::debug!("attempt {attempt} failed ({retry_reason}); retrying in {delay:.1} s");
        std::thread::sleep(Duration::from_secs_f64(delay));
    }
}

/// Runs several requests with at most `cfg.concurrency` in flight.
pub fn request_batch(cfg: &LlmEndpointConfig, prompts: &[String]) -> Result<Vec<Result<JustificationResponse>>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.concurrency)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    use rayon::prelude::*;
    Ok(pool.install(|| prompts.par_iter().map(|p| request_justification(cfg, p)).collect()))
}

struct Cause {
    category: String,
    location: String,
    distance: f64,
    distance_text: String,
}

fn participant_causes(triplets: &[Triplet]) -> Vec<Cause> {
    let mut causes: Vec<(usize, Cause)> = Vec::new();
    let mut indices: Vec<usize> = triplets
        .iter()
        .filter_map(|t| match t.element {
            ElementRef::Participant(i) => Some(i),
            _ => None,
        })
        .collect();
    indices.dedup();
    for i in indices {
        let get = |name: &str| {
            triplets
                .iter()
                .find(|t| t.element == ElementRef::Participant(i) && t.attribute.name == name)
        };
        let (Some(category), Some(location), Some(distance)) = (get("category"), get("location"), get("distance")) else {
            continue;
        };
        causes.push((
            i,
            Cause {
                category: category.attribute.value.clone(),
                location: location.attribute.value.clone(),
                distance: distance.attribute.raw.unwrap_or(f64::INFINITY),
                distance_text: distance.attribute.value.clone(),
            },
        ));
    }
    causes.sort_by(|a, b| a.1.distance.total_cmp(&b.1.distance).then(a.0.cmp(&b.0)));
    causes.into_iter().map(|(_, c)| c).collect()
}

fn steering_clause(st: SteeringLevel) -> &'static str {
    match st {
        SteeringLevel::Idle => "remains stationary",
        SteeringLevel::MoveStraight => "moves straight",
        SteeringLevel::SlightLeft => "veers slightly left",
        SteeringLevel::SlightRight => "veers slightly right",
        SteeringLevel::TurnLeft => "turns left",
        SteeringLevel::TurnRight => "turns right",
    }
}

fn speed_clause(sp: SpeedLevel) -> &'static str {
    match sp {
        SpeedLevel::Constant => "at constant speed",
        SpeedLevel::Accelerating => "while accelerating",
        SpeedLevel::Decelerating => "while decelerating",
    }
}

fn where_phrase(preposition: &str) -> String {
    match preposition {
        "behind" => "behind it".to_string(),
        "at" => "at its position".to_string(),
        p => format!("{p} it"),
    }
}

/// Offline justification citing the steering level and the nearest
/// participants (at most three).
pub fn fallback_justification(action: &MetaActionLabel, triplets: &[Triplet]) -> String {
    let st = action.steering();
    let mut s = format!("The ego vehicle {}", steering_clause(st));
    if st != SteeringLevel::Idle {
        s.push(' ');
        s.push_str(speed_clause(action.longitudinal()));
    }
    let causes = participant_causes(triplets);
    if causes.is_empty() {
        s.push_str("; no interacting participants.");
        return s;
    }
    let cited: Vec<String> = causes
        .iter()
        .take(3)
        .map(|c| format!("the {} {} at {}", c.category, where_phrase(&c.location), c.distance_text))
        .collect();
    s.push_str(", considering ");
    match cited.len() {
        1 => s.push_str(&cited[0]),
        n => {
            s.push_str(&cited[..n - 1].join(", "));
            s.push_str(" and ");
            s.push_str(&cited[n - 1]);
        }
    }
    s.push('.');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Direction {
    Stationary,
    Straight,
    Left,
    Right,
}

fn direction_of(st: SteeringLevel) -> Direction {
    match st {
        SteeringLevel::Idle => Direction::Stationary,
        SteeringLevel::MoveStraight => Direction::Straight,
        SteeringLevel::SlightLeft | SteeringLevel::TurnLeft => Direction::Left,
        SteeringLevel::SlightRight | SteeringLevel::TurnRight => Direction::Right,
    }
}

fn steering_mentions(text: &str) -> Vec<(Direction, String)> {
    static RES: OnceLock<Vec<(Option<Direction>, Regex)>> = OnceLock::new();
    let res = RES.get_or_init(|| {
        vec![
            (
                None,
                Regex::new(
                    r"\b(?:turn|turns|turning|turned|veer|veers|veering|veered|bear|bears|bearing|steer|steers|steering)\s+(?:slightly\s+)?(?:to\s+the\s+)?(left|right)\b",
                )
                .unwrap(),
            ),
            (None, Regex::new(r"\bslight(?:ly)?\s+(left|right)\b").unwrap()),
            (
                Some(Direction::Straight),
                Regex::new(
                    r"\b(?:move|moves|moving|go|goes|going|drive|drives|driving|continue|continues|continuing|proceed|proceeds|proceeding|head|heads|heading)\s+straight\b",
                )
                .unwrap(),
            ),
            (
                Some(Direction::Stationary),
                Regex::new(r"\b(?:remain|remains|remaining|stay|stays|staying)\s+(?:stationary|still|stopped)\b").unwrap(),
            ),
        ]
    });
    let lower = text.to_lowercase();
    let mut out = Vec::new();
    for (dir, re) in res {
        for c in re.captures_iter(&lower) {
            let d = dir.unwrap_or_else(|| if &c[1] == "left" { Direction::Left } else { Direction::Right });
            out.push((d, c[0].to_string()));
        }
    }
    out
}

/// Lexical checks: participant categories must exist in the graph, and
/// steering phrases must agree with the action's steering level.
pub fn validate_justification_with(
    text: &str,
    g: &SceneGraph,
    action: &MetaActionLabel,
    vocab: &Vocabulary,
) -> Vec<Finding> {
    let mut findings = Vec::new();
    let present: BTreeSet<String> = match extract_triplets(g) {
        Ok(t) => t
            .iter()
            .filter(|t| matches!(t.element, ElementRef::Participant(_)) && t.attribute.name == "category")
            .map(|t| t.attribute.value.to_lowercase())
            .collect(),
        Err(e) => return vec![Finding::new("graph", e.to_string())],
    };
    let lower = text.to_lowercase();
    for cat in &vocab.participant_category {
        let re = Regex::new(&format!(r"\b{}(?:s|es)?\b", regex::escape(&cat.to_lowercase()))).unwrap();
        if re.is_match(&lower) && !present.contains(&cat.to_lowercase()) {
            findings.push(Finding::new(
                "justification",
                format!("participant category '{cat}' not in scene graph"),
            ));
        }
    }
    let expected = direction_of(action.steering());
    let mut seen = BTreeSet::new();
    for (d, phrase) in steering_mentions(text) {
        if d != expected && seen.insert(phrase.clone()) {
            findings.push(Finding::new(
                "justification",
                format!("'{phrase}' contradicts action '{}'", action.steering()),
            ));
        }
    }
    findings
}

pub fn validate_justification(text: &str, g: &SceneGraph, action: &MetaActionLabel) -> Vec<Finding> {
    validate_justification_with(text, g, action, &Vocabulary::default())
}
