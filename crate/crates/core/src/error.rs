use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        message: String,
    },

    #[error("{0}: no parseable rows")]
    EmptyFile(PathBuf),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown timezone `{0}`")]
    UnknownTimezone(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("empty profile bucket: {0}")]
    EmptyBucket(String),

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("study failed, no trial completed ({trials} attempted)")]
    StudyFailed { trials: usize, log: String },

    #[error("experiment: {0}")]
    Experiment(String),

    #[error("config: {0}")]
    Config(String),

    #[error("missing artifact: {}", .0.display())]
    MissingArtifact(PathBuf),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
