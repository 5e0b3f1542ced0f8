use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric failure in {what}: residual estimate {residual:e}")]
    NumericFailure { what: String, residual: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate weight: survival at {at} is zero in the tail table")]
    DegenerateWeight { at: f64 },

    #[error("construction failed: {0}")]
    ConstructionFailure(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
