use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the forecasting pipeline.
#[derive(Debug, Error)]
pub enum PpmError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("numeric failure: {message} (floor_fraction = {floor_fraction:.4})")]
    Numeric { message: String, floor_fraction: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("missing forward cache: {0}")]
    MissingCache(&'static str),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T, E = PpmError> = std::result::Result<T, E>;

impl PpmError {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        PpmError::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PpmError::Io {
            path: path.into(),
            source,
        }
    }
}
