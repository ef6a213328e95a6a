use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum SblError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// An iterative estimator produced non-finite values. The objective
    /// trace up to the failure is kept for diagnosis.
    #[error("estimator diverged after {} iterations: {reason}", trace.len())]
    Diverged { reason: String, trace: Vec<f64> },

    #[error("iteration cap of {max_iter} reached without convergence")]
    NonConvergence { max_iter: usize, partial: Vec<f64> },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported case: {0}")]
    Unsupported(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SblError>;

impl From<ndarray_linalg::error::LinalgError> for SblError {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        SblError::NumericalFailure(e.to_string())
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> SblError {
    SblError::InvalidArgument(msg.into())
}

pub(crate) fn ensure_positive(name: &str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be finite and > 0, got {value}")))
    }
}
