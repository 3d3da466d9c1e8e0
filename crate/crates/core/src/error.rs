use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by estimators, optimizers, objectives and file formats.
#[derive(Debug, Error)]
pub enum ZoError {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("sample index {index} out of range for {n} samples")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("non-finite loss at sample {index}")]
    NonFiniteLoss { index: usize },

    #[error("parameters became non-finite")]
    NonFiniteParameters,

    #[error("unsupported operation: {0}")]
    Unsupported(&'static str),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("digest mismatch: initial parameters do not match the trajectory header")]
    DigestMismatch,

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("step {requested} beyond recorded length {available}")]
    StepOutOfRange { requested: u64, available: u64 },

    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl ZoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ZoError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ZoError> = std::result::Result<T, E>;
