use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    /// Malformed container (bad magic, unparsable header, inconsistent lengths).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed container holding a layout this crate does not read.
    #[error("unsupported layout: {0}")]
    UnsupportedLayout(String),

    /// A caller violated a documented precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("tiling error: {dimension} = {size} is not divisible by patch size {patch}")]
    Tiling {
        dimension: &'static str,
        size: usize,
        patch: usize,
    },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("truncated file: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("out of range: {0}")]
    Range(String),

    #[error("invalid config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("simulation diverged at step {step}")]
    SimulationDiverged { step: usize },

    #[error("training diverged at epoch {epoch}, batch {batch}")]
    TrainingDiverged { epoch: usize, batch: usize },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } | Error::Json(_) => 2,
            Error::TrainingDiverged { .. } => 4,
            Error::SimulationDiverged { .. } => 5,
            _ => 3,
        }
    }
}
