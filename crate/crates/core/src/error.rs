use thiserror::Error;

/// Errors raised by the model, estimators and experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("enumeration guard: C({h},{k}) = {count} supports exceeds limit {limit}")]
    EnumerationGuard {
        h: usize,
        k: usize,
        count: f64,
        limit: f64,
    },

    #[error("empty batch")]
    EmptyBatch,

    #[error("unknown mode `{0}`")]
    UnknownMode(String),

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name used in machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::DimensionMismatch(_) => "dimension_mismatch",
            Error::EnumerationGuard { .. } => "enumeration_guard",
            Error::EmptyBatch => "empty_batch",
            Error::UnknownMode(_) => "unknown_mode",
            Error::CheckFailed(_) => "check_failed",
            Error::Format(_) => "format",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit status for the command-line runner. 1 and 2 are left to
    /// panics and argument parsing.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_) => 3,
            Error::UnknownMode(_) => 4,
            Error::DimensionMismatch(_) => 5,
            Error::EnumerationGuard { .. } => 6,
            Error::EmptyBatch => 7,
            Error::CheckFailed(_) => 8,
            Error::Format(_) => 9,
            Error::Io(_) => 10,
            Error::Json(_) => 11,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn mismatch(msg: impl Into<String>) -> Error {
    Error::DimensionMismatch(msg.into())
}
