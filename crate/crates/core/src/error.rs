use std::path::PathBuf;

use lesionkit_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("missing file {0}")]
    Missing(PathBuf),
    #[error("malformed header {path}: {reason}")]
    MalformedHeader { path: PathBuf, reason: String },
    #[error("inconsistent volume {path}: {reason}")]
    Inconsistent { path: PathBuf, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A geometric transform left nothing behind.
    #[error("degenerate result: {0}")]
    Degenerate(String),
    /// An implant spec does not fit the slice it is applied to.
    #[error("containment error: {0}")]
    Containment(String),
    /// Training produced a non-finite loss.
    #[error("training aborted: {0}")]
    TrainingAborted(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error at {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Re-root a config error's JSON pointer under `pointer`.
    pub fn nest(self, pointer: &str) -> Self {
        match self {
            Error::Config(m) if m.starts_with('/') => Error::Config(format!("{pointer}{m}")),
            Error::Config(m) => Error::Config(format!("{pointer}: {m}")),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

pub(crate) fn json_err(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
    let path = path.into();
    move |source| Error::Json { path, source }
}
