use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum KgeError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("protocol violation: {0}")]
    Protocol(String),

    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite (max |param| = {max_abs_param:e})")]
    Diverged {
        epoch: usize,
        batch: usize,
        max_abs_param: f64,
    },

    #[error("invalid file format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, KgeError>;

impl KgeError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        KgeError::Io {
            path: path.into(),
            source,
        }
    }
}
