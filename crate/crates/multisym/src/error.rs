use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("solver failed after {iterations} iterations (residual {residual:e})")]
    SolverFailure { iterations: usize, residual: f64 },
    #[error("branch ambiguity: {0}")]
    BranchAmbiguity(String),
    #[error("history is not a solution (residual {0:e})")]
    NotASolution(f64),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
