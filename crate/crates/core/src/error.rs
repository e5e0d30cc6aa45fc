use thiserror::Error;

#[derive(Debug, Error)]
pub enum FwlError {
    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },

    #[error("dangling references: {0}")]
    DanglingReference(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("cholesky factorization failed (min pivot {min_pivot:e}, jitter {jitter:e})")]
    NotPositiveDefinite { min_pivot: f64, jitter: f64 },

    #[error("config key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = FwlError> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> FwlError {
    FwlError::InvalidArgument(msg.into())
}
