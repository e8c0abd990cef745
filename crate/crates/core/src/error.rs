use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model or distribution failed an invariant check.
    #[error("validation error: {0}")]
    Validation(String),

    /// A derived object could not be constructed from its inputs.
    #[error("construction error: {0}")]
    Construction(String),

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },

    #[error("training diverged at episode {episode}: {detail}")]
    Divergence { episode: usize, detail: String },

    #[error("LP oracle failure: {0}")]
    Internal(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
