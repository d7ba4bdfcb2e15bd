use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("signal mismatch: {0}")]
    Mismatch(String),

    #[error("input too short: {0}")]
    TooShort(String),

    #[error("degenerate pre-normalization vector (norm {0:e})")]
    Degenerate(f64),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("wav format: {0}")]
    Format(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("config: {0}")]
    Config(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
