use thiserror::Error;

/// Errors raised by the contest model, the dynamics and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid cost function: {0}")]
    InvalidCost(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("best response is undefined when the others' aggregate is zero")]
    UndefinedBestResponse,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("cost normalization violated: min_i c_i(1) = {0} (expected 1)")]
    Normalization(f64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("no convergence: {0}")]
    NonConvergence(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
