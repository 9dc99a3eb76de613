use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    /// Iterative numerics failed to reach the requested accuracy.
    #[error("numeric error: {message} (achieved {achieved:e})")]
    Numeric { message: String, achieved: f64 },

    /// The contrast family does not satisfy the concavity requirements of the optimizer.
    #[error("inadmissible contrast: {0}")]
    Admissibility(String),

    #[error("verification error: {0}")]
    Verification(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}
