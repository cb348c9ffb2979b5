use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("ordering error at row {row}: {message}")]
    Ordering { row: usize, message: String },

    #[error("size error: {0}")]
    Size(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape error on {axis}: expected {expected}, got {actual}")]
    Shape {
        axis: String,
        expected: usize,
        actual: usize,
    },

    #[error("state error: {0}")]
    State(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss {loss}")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("compatibility error: {0}")]
    Compatibility(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(axis: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::Shape {
            axis: axis.into(),
            expected,
            actual,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
