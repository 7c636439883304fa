use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("cannot initialize {requested} components from this sample (closest attainable: {attained})")]
    InfeasibleComponents { requested: usize, attained: usize },

    #[error("record arity mismatch: expected {expected} fields, found {found}")]
    ArityMismatch { expected: usize, found: usize },

    #[error("duplicate truth id `{0}`")]
    DuplicateTruthId(String),

    #[error("sample size {requested} exceeds population size {population}")]
    SampleTooLarge { requested: u64, population: u64 },

    #[error("{failed} of {total} replicate fits failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("neighbourhood predicate `{0}` is not reflexive")]
    NotReflexive(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
