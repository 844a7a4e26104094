use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("degree {got} exceeds the configured maximum {max}")]
    DegreeOverflow { got: usize, max: usize },
    #[error("only {got} sample points above the threshold, need at least {need}")]
    TooFewTailPoints { got: usize, need: usize },
    #[error("calibration degenerate: {0}")]
    Degenerate(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("solver failed: {0}")]
    Solver(String),
    #[error("non-convergence: {0}")]
    NonConvergence(String),
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Invalid(msg.into()))
}
