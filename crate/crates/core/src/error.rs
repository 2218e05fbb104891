use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid robot model: {0}")]
    InvalidModel(String),

    #[error("invalid controller config: {0}")]
    InvalidConfig(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid QP problem: {0}")]
    InvalidProblem(String),

    #[error("point sampling: {0}")]
    Sampling(String),

    #[error("{path}:{line}: {msg}")]
    PointFile {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("scenario generation failed after {attempts} rejected samples ({kind})")]
    Generation { kind: String, attempts: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

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

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
