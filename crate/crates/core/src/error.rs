use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::numerics::ShapeError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("embedding for token '{token}' has {found} values, expected {expected}")]
    EmbeddingDim {
        token: String,
        expected: usize,
        found: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(#[from] ShapeError),

    #[error("sentence mismatch: {0}")]
    Alignment(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
