use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("framing error: {0}")]
    Framing(String),

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("embedding cache miss for key {0}")]
    CacheMiss(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// AUC of exactly 0 or 1; `sentinel` carries the signed-infinite d′.
    #[error("degenerate AUC {auc} (d' = {sentinel}) for {context}")]
    DegenerateAuc {
        auc: f64,
        sentinel: f64,
        context: String,
    },

    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    #[error("need at least two classes, found {0}")]
    SingleClass(usize),

    #[error("class {class} has no training examples")]
    MissingClass { class: usize },

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate clip_id {0:?}")]
    DuplicateClip(String),

    #[error("split {0} is empty")]
    MissingSplit(&'static str),

    #[error("unknown model {0:?}")]
    UnknownModel(String),

    #[error("wav error in {path}: {message}")]
    Wav { path: PathBuf, message: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable class name, used by the CLI's error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid_input",
            Error::Config(_) => "config",
            Error::Framing(_) => "framing",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::CacheMiss(_) => "cache_miss",
            Error::Degenerate(_) => "degenerate_input",
            Error::DegenerateAuc { .. } => "degenerate_auc",
            Error::Diverged { .. } => "diverged",
            Error::SingleClass(_) => "single_class",
            Error::MissingClass { .. } => "missing_class",
            Error::Manifest { .. } => "manifest",
            Error::DuplicateClip(_) => "duplicate_clip",
            Error::MissingSplit(_) => "missing_split",
            Error::UnknownModel(_) => "unknown_model",
            Error::Wav { .. } => "wav",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
