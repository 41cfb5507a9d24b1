use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    /// Operand shapes are incompatible.
    #[error("dimension error: {0}")]
    Shape(String),
    /// A hyperparameter is outside its valid range.
    #[error("configuration error: {0}")]
    Config(String),
    /// The operation was called in a way its contract forbids.
    #[error("usage error: {0}")]
    Usage(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(TensorError::Shape(msg.into()))
}
