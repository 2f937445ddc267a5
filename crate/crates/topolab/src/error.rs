//! Crate-wide error type and the CLI exit-code policy.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value is out of range or inconsistent (exit 1).
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Configuration files or CLI arguments that cannot be used (exit 1).
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data failed validation (task files, checkpoints, …) (exit 1).
    #[error("validation error: {0}")]
    Validation(String),

    /// A task pool could not be filled at all.
    #[error("pool shortfall: {0}")]
    Shortfall(String),

    /// Defensive check that should be unreachable for graphs built by this crate.
    #[error("cycle detected in topology: {0}")]
    Cycle(String),

    /// The exact enumeration oracle was asked for an intractable instance.
    #[error("tractability guard violated: {0}")]
    Tractability(String),

    /// The LLM backend stayed unreachable through all retries.
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),

    /// The LLM backend answered with a non-retryable HTTP error.
    #[error("backend protocol error: status {status}, body: {body}")]
    Protocol { status: u16, body: String },

    /// The LLM backend answered 2xx but the payload was unusable.
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),

    /// Training produced a non-finite gradient; aborting is safer than updating.
    #[error("non-finite gradient: {0}")]
    NonFiniteGradient(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Exit-code policy: 0 success, 1 validation/usage, 2 runtime/backend.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::Validation(_)
            | Error::Shortfall(_)
            | Error::Tractability(_) => 1,
            Error::Cycle(_)
            | Error::BackendUnavailable(_)
            | Error::Protocol { .. }
            | Error::MalformedResponse(_)
            | Error::NonFiniteGradient(_)
            | Error::Io { .. }
            | Error::Json(_) => 2,
        }
    }
}
