use thiserror::Error;

/// Errors raised across the lab. Variants follow the failure classes of the
/// individual pipelines rather than the module that raised them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal consistency error: {0}")]
    Inconsistent(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("negative edge weight {weight} on edge {edge}; clamp probabilities to <= 0.5 - 1e-9 before decoding")]
    NegativeWeight { edge: usize, weight: f64 },

    #[error("too many defects for exhaustive matching: {0} (limit {1})")]
    TooManyDefects(usize, usize),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("fit failed: {0}")]
    Fit(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("ill-conditioned system: {0}")]
    IllConditioned(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
