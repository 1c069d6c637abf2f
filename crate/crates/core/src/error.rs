use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the mathematical domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A distribution failed a construction invariant.
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    /// An exact formula was requested outside its numerically stable range.
    #[error("{0}")]
    Unstable(String),

    /// An iterative solver did not reach the requested residual.
    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    /// A distribution spec string could not be parsed.
    #[error("bad distribution spec `{0}`: {1}")]
    BadSpec(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
