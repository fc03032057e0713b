use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("calibration incomplete: source ended after {frames} frames ({elapsed_s:.2} s of {required_s} s)")]
    CalibrationIncomplete {
        frames: usize,
        elapsed_s: f64,
        required_s: f64,
    },

    #[error("empty window {0}: no samples to classify")]
    EmptyWindow(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("model file: {0}")]
    Model(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
