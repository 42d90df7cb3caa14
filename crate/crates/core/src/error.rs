use thiserror::Error;

/// Errors raised by the precoding pipeline and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: `{field}` {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch { context: &'static str, expected: String, actual: String },

    #[error("stacked effective channel is ill-conditioned (condition estimate {condition:.3e})")]
    IllConditioned { condition: f64 },

    #[error("degenerate analog stage: {0}")]
    DegenerateAnalog(String),

    #[error("malformed conic problem: {0}")]
    MalformedProblem(String),

    #[error("non-finite coefficient in {0}")]
    NonFinite(&'static str),

    #[error("subproblem infeasible at SCA iteration {iteration}")]
    SubproblemInfeasible { iteration: usize },

    #[error("negative SINR {0}")]
    NegativeSinr(f64),

    #[error("at least two trials are required, got {0}")]
    TooFewTrials(usize),

    #[error("parse error at {path}:{line}: {reason}")]
    Parse { path: String, line: usize, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig { field: field.into(), reason: reason.into() }
    }

    pub(crate) fn dims(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch { context, expected: expected.to_string(), actual: actual.to_string() }
    }
}
