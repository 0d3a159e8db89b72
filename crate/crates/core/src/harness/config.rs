//! The single JSON run configuration. Every field has a default, so `{}`
//! is a valid config.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::distill::{MatchingMode, TrainConfig};
use crate::error::{Error, Result};
use crate::frontend::SpectrogramConfig;
use crate::students::StudentFamily;
use crate::teacher::TeacherSpec;

use super::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; student init, training order and probes derive from it.
    pub seed: u64,
    pub frontend: SpectrogramConfig,
    pub teacher: TeacherSpec,
    pub student: StudentShape,
    pub train: TrainConfig,
    pub mode: MatchingMode,
    /// Frame advance used for targets and clip embeddings.
    pub advance_s: f64,
    pub synth: SynthConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudentShape {
    pub family: StudentFamily,
    pub depth: usize,
    pub width: usize,
}

impl Default for StudentShape {
    fn default() -> Self {
        Self {
            family: StudentFamily::ConvScaledLike,
            depth: 2,
            width: 24,
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            frontend: SpectrogramConfig::default(),
            teacher: TeacherSpec::default(),
            student: StudentShape::default(),
            train: TrainConfig::default(),
            mode: MatchingMode::Local,
            advance_s: 2.0,
            synth: SynthConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.frontend.validate()?;
        self.train.validate()?;
        if !(self.advance_s > 0.0) || !self.advance_s.is_finite() {
            return Err(Error::Config(format!("advance_s must be positive, got {}", self.advance_s)));
        }
        Ok(())
    }
}
