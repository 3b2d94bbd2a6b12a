//! Global pipeline configuration and its content hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::canonical::to_canonical_line;
use crate::error::{Error, Result};
use crate::justify::{check_prompt_template, LlmEndpointConfig, DEFAULT_PROMPT_TEMPLATE};
use crate::meta_action::ThresholdSpace;
use crate::metrics::L2Convention;
use crate::motion::WindowConfig;
use crate::qa_gen::QaLibrary;
use crate::scene_graph::Vocabulary;

/// Config argument that selects the built-in defaults instead of a file.
pub const DEFAULT_KEYWORD: &str = "default";

pub const DEFAULT_BACKGROUND: &str = "You are the driver of the ego vehicle. Using the camera views, the \
bird's-eye-view map and the recent ego motion below, describe the scene, choose a meta-action, justify \
it and plan the motion for the next 3 seconds.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GlobalConfig {
    pub thresholds: ThresholdSpace,
    pub windows: WindowConfig,
    /// Question-set/template library; the bundled one when absent.
    pub qa_library: Option<PathBuf>,
    pub vocabulary: Vocabulary,
    pub llm: Option<LlmEndpointConfig>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Background paragraph opening the motion system prompt.
    pub background: String,
    pub justification_template: String,
    /// Share of samples routed to the validation split.
    pub val_fraction: f64,
    pub wheelbase_m: f64,
    pub l2_convention: L2Convention,
}

impl Default for GlobalConfig {
    fn default() -> Self {
        GlobalConfig {
            thresholds: ThresholdSpace::default(),
            windows: WindowConfig::default(),
            qa_library: None,
            vocabulary: Vocabulary::default(),
            llm: None,
            seed: 0,
            output_dir: PathBuf::from("out"),
            background: DEFAULT_BACKGROUND.to_string(),
            justification_template: DEFAULT_PROMPT_TEMPLATE.to_string(),
            val_fraction: 0.0,
            wheelbase_m: 2.588,
            l2_convention: L2Convention::default(),
        }
    }
}

impl GlobalConfig {
    /// Loads a config document, or the defaults for the `default` keyword.
    pub fn load(arg: &str) -> Result<Self> {
        if arg == DEFAULT_KEYWORD {
            return Ok(GlobalConfig::default());
        }
        let text = std::fs::read_to_string(arg).map_err(|e| Error::Config(format!("cannot read {arg}: {e}")))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: GlobalConfig = serde_json::from_str(text).map_err(|e| match Error::from_json(e, text.as_bytes()) {
            Error::Parse { offset, message } => Error::Config(format!("at byte {offset}: {message}")),
            other => other,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.thresholds.validate()?;
        let w = &self.windows;
        if !(w.dt > 0.0 && w.history_s >= 0.0 && w.future_s > 0.0) || ![w.dt, w.history_s, w.future_s].iter().all(|v| v.is_finite()) {
            return Err(Error::Config("windows need dt > 0, history_s >= 0 and future_s > 0".into()));
        }
        for (name, v) in [("history_s", w.history_s), ("future_s", w.future_s)] {
            let steps = v / w.dt;
            if (steps - steps.round()).abs() > 1e-9 {
                return Err(Error::Config(format!("windows.{name} must be a multiple of dt")));
            }
        }
        if !(0.0..=1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1]".into()));
        }
        if !(self.wheelbase_m > 0.0 && self.wheelbase_m.is_finite()) {
            return Err(Error::Config("wheelbase_m must be positive".into()));
        }
        check_prompt_template(&self.justification_template).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(llm) = &self.llm {
            llm.validate()?;
        }
        Ok(())
    }

    pub fn library(&self) -> Result<QaLibrary> {
        match &self.qa_library {
            Some(p) => QaLibrary::load(p),
            None => Ok(QaLibrary::default()),
        }
    }

    /// Hex SHA-256 over the canonical single-line form.
    pub fn hash(&self) -> Result<String> {
        let line = to_canonical_line(self)?;
        Ok(hex::encode(Sha256::digest(line.as_bytes())))
    }

    /// Resolves a relative library path against the config file's directory.
    pub fn resolve_paths(mut self, base: &Path) -> Self {
        if let Some(p) = &self.qa_library {
            if p.is_relative() {
                self.qa_library = Some(base.join(p));
            }
        }
        self
    }
}
