use thiserror::Error;

/// Errors shared by every module of the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An iterative solver ran out of budget. `best` is the value of the
    /// best iterate seen and `gap` its certified distance to the optimum.
    #[error("no convergence after {iterations} iterations (best {best}, gap {gap})")]
    Convergence {
        iterations: usize,
        best: f64,
        gap: f64,
    },

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("plan infeasible: {0}")]
    PlanInfeasible(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidArgument(msg.into()))
}
