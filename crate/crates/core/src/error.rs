use thiserror::Error;

/// Errors raised by the estimation, testing and ingestion routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter lies outside its mathematical domain (e.g. a non-positive scale).
    #[error("domain error: {0}")]
    Domain(String),

    /// Input data violates a structural contract (group sizes, mismatched tables, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The pooled sample has no spread, so no location-scale fit exists.
    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// An iterative or quadrature routine failed to reach its tolerance.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A file did not follow its documented schema.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A parsed dataset failed a semantic check.
    #[error("validation error: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
