use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnfError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
}

pub type Result<T> = std::result::Result<T, EnfError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(EnfError::InvalidArgument(msg.into()))
}
