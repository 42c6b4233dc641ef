use thiserror::Error;

/// Errors raised by the compression toolkit.
#[derive(Debug, Error)]
pub enum AwpError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in input: {0}")]
    NonFiniteInput(String),

    #[error("non-finite value produced during {0}")]
    NonFinite(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("eigenvalue iteration did not converge within {iters} iterations (last relative change {change:e})")]
    NotConverged { iters: usize, change: f64 },

    #[error("divergence at iteration {iter}: normalized loss {loss:e} exceeds limit {limit:e}")]
    Divergence { iter: usize, loss: f64, limit: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("size guard violated: {0}")]
    Guard(String),

    #[error("malformed tensor container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl AwpError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            AwpError::NonFinite(_)
                | AwpError::NotConverged { .. }
                | AwpError::Divergence { .. }
                | AwpError::Singular(_)
        )
    }
}

pub type Result<T, E = AwpError> = std::result::Result<T, E>;
