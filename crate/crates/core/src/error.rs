//! Error types shared across the library.

use thiserror::Error;

/// Library-wide error type.
///
/// The variants map onto the CLI exit-code contract: schema problems,
/// model-assumption violations, and numerical refusals are kept distinct so
/// callers can react differently to each.
#[derive(Debug, Error)]
pub enum Error {
    /// A problem definition or configuration failed validation.
    #[error("invalid configuration at `{path}`: {message}")]
    Schema { path: String, message: String },

    /// A model assumption required by the expansion is violated.
    #[error("assumption violated ({assumption}): {message}")]
    Assumption { assumption: String, message: String },

    /// A numerical routine refuses to produce a result it cannot trust.
    #[error("numerical refusal: {0}")]
    Refusal(String),

    /// A time query fell outside the window a trace is defined on.
    #[error("time {t} outside trace window [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    /// Two fields that must share a grid do not.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// A simulated path exceeded its step cap before crossing.
    #[error("path {path} exceeded step cap {cap} without crossing")]
    StepCapExceeded { path: u64, cap: u64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn assumption(assumption: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Assumption {
            assumption: assumption.into(),
            message: message.into(),
        }
    }

    /// Exit code the CLI maps this error onto.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Schema { .. } => 2,
            Error::Assumption { .. } => 3,
            Error::Refusal(_)
            | Error::OutOfRange { .. }
            | Error::GridMismatch(_)
            | Error::StepCapExceeded { .. } => 4,
            Error::Io(_) | Error::Json(_) => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
