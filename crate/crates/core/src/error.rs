use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown port code {0}")]
    UnknownPortCode(i64),

    #[error("invalid port registry: {0}")]
    Registry(String),

    #[error("missing or malformed CSV header: {0}")]
    Header(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate classification: {0}")]
    DegenerateClassification(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("model is not fitted: {0}")]
    NotFitted(&'static str),

    #[error("bundle version mismatch: expected {expected:?}, found {found:?}")]
    VersionMismatch { expected: String, found: String },

    #[error("corrupt bundle ({field}): {reason}")]
    CorruptBundle { field: String, reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
