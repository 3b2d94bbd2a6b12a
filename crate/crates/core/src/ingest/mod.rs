//! Scenario bundles: parsing, canonical serialization and validation.

mod nuscenes;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use nuscenes::{from_nuscenes_layout, AdapterOptions, AdapterOutput, NUSCENES_TABLES};

use crate::canonical::to_canonical_pretty;
use crate::error::{Error, Finding, Result};
use crate::geometry::Size3;
use crate::motion::WindowConfig;
use crate::scene_graph::{validate_elements, SceneElementSet, Vocabulary};

const TIME_EPS: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRef {
    pub path: String,
    /// Microseconds.
    pub timestamp: i64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgoMotionSample {
    /// Seconds.
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Heading in radians, (-pi, pi].
    pub yaw: f64,
    /// Speed, m/s.
    pub v: f64,
    /// Steering angle, degrees.
    pub delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub yaw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticipantTrack {
    pub track_id: String,
    pub category: String,
    pub status: String,
    pub size: Size3,
    pub samples: Vec<TrackSample>,
    pub current_index: usize,
}

/// One driving clip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioBundle {
    pub scenario_id: String,
    /// Sample period, seconds.
    pub dt: f64,
    pub views: BTreeMap<String, Vec<FrameRef>>,
    pub bev_map: String,
    pub ego: Vec<EgoMotionSample>,
    pub participants: Vec<ParticipantTrack>,
    pub elements: SceneElementSet,
}

impl ScenarioBundle {
    /// Observation time: the first instant with a full history window behind it.
    pub fn observation_time(&self, windows: &WindowConfig) -> Option<f64> {
        self.ego.first().map(|s| s.t + windows.history_s)
    }
}

/// Parses a canonical bundle document and validates it against the default
/// window lengths and vocabulary.
pub fn parse_scenario_bundle(bytes: &[u8]) -> Result<ScenarioBundle> {
    parse_scenario_bundle_with(bytes, &WindowConfig::default(), &Vocabulary::default())
}

pub fn parse_scenario_bundle_with(
    bytes: &[u8],
    windows: &WindowConfig,
    vocab: &Vocabulary,
) -> Result<ScenarioBundle> {
    let bundle: ScenarioBundle =
        serde_json::from_slice(bytes).map_err(|e| Error::from_json(e, bytes))?;
    if let Some(first) = validate_bundle_with(&bundle, windows, vocab).into_iter().next() {
        return Err(Error::Validation {
            field: first.path,
            message: first.message,
        });
    }
    Ok(bundle)
}

pub fn serialize_bundle(b: &ScenarioBundle) -> Result<String> {
    to_canonical_pretty(b)
}

pub fn load_bundle(path: &Path) -> Result<ScenarioBundle> {
    parse_scenario_bundle(&std::fs::read(path)?)
}

/// Loads every `*.json` bundle in a directory, sorted by file name.
pub fn load_bundle_dir(dir: &Path, windows: &WindowConfig, vocab: &Vocabulary) -> Result<Vec<ScenarioBundle>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            parse_scenario_bundle_with(&std::fs::read(p)?, windows, vocab).map_err(|e| match e {
                Error::Validation { field, message } => Error::Validation {
                    field: format!("{}: {field}", p.display()),
                    message,
                },
                other => other,
            })
        })
        .collect()
}

pub fn validate_bundle(b: &ScenarioBundle) -> Vec<Finding> {
    validate_bundle_with(b, &WindowConfig::default(), &Vocabulary::default())
}

pub fn validate_bundle_with(b: &ScenarioBundle, windows: &WindowConfig, vocab: &Vocabulary) -> Vec<Finding> {
    let mut f = Vec::new();
    if b.scenario_id.trim().is_empty() {
        f.push(Finding::new("scenario_id", "empty"));
    }
    if !(b.dt.is_finite() && b.dt > 0.0) {
        f.push(Finding::new("dt", format!("must be > 0, got {}", b.dt)));
    }

    let mut counts = Vec::new();
    for (name, frames) in &b.views {
        counts.push(frames.len());
        for (i, w) in frames.windows(2).enumerate() {
            if w[1].timestamp <= w[0].timestamp {
                f.push(Finding::new(
                    format!("views.{name}[{}].timestamp", i + 1),
                    "timestamps not strictly increasing",
                ));
            }
        }
    }
    if counts.windows(2).any(|w| w[0] != w[1]) {
        f.push(Finding::new("views", "unequal frame counts"));
    }

    if b.ego.is_empty() {
        f.push(Finding::new("ego", "empty ego series"));
    }
    for (i, s) in b.ego.iter().enumerate() {
        let finite = [s.t, s.x, s.y, s.yaw, s.v, s.delta].iter().all(|v| v.is_finite());
        if !finite {
            f.push(Finding::new(format!("ego[{i}]"), "non-finite value"));
            continue;
        }
        if !(s.yaw > -PI && s.yaw <= PI) {
            f.push(Finding::new(format!("ego[{i}].yaw"), "yaw outside (-pi, pi]"));
        }
        if s.v < 0.0 {
            f.push(Finding::new(format!("ego[{i}].v"), "negative speed"));
        }
        if i > 0 && s.t <= b.ego[i - 1].t {
            f.push(Finding::new(format!("ego[{i}].t"), "timestamps not strictly increasing"));
        }
    }
    if let (Some(first), Some(last)) = (b.ego.first(), b.ego.last()) {
        let t_obs = first.t + windows.history_s;
        if last.t + TIME_EPS < t_obs + windows.future_s {
            f.push(Finding::new(
                "ego",
                format!(
                    "ego horizon short: series ends at {:.3} s, window needs {:.3} s",
                    last.t,
                    t_obs + windows.future_s
                ),
            ));
        }
    }

    for (i, p) in b.participants.iter().enumerate() {
        let path = format!("participants[{i}]");
        if p.samples.is_empty() {
            f.push(Finding::new(format!("{path}.samples"), "empty track"));
        }
        if p.samples.windows(2).any(|w| w[1].t <= w[0].t) {
            f.push(Finding::new(format!("{path}.samples"), "timestamps not increasing"));
        }
        if !(p.size.length > 0.0 && p.size.width > 0.0 && p.size.height > 0.0) {
            f.push(Finding::new(format!("{path}.size"), "size components must be positive"));
        }
        if !p.samples.is_empty() && p.current_index >= p.samples.len() {
            f.push(Finding::new(format!("{path}.current_index"), "index out of range"));
        }
    }

    f.extend(validate_elements(&b.elements, vocab));
    f
}
