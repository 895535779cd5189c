use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("integration failed at t = {time}: {message}")]
    Integration { time: f64, message: String },
    #[error("no convergence (best residual {best_residual:e}): {message}")]
    NonConvergence { best_residual: f64, message: String },
    #[error("no dominant multiplier: {0}")]
    NoDominant(String),
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl LabError {
    /// True for errors caused by bad user input rather than numerical trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            LabError::Domain(_)
                | LabError::Config(_)
                | LabError::Precondition(_)
                | LabError::Validation(_)
                | LabError::Csv(_)
                | LabError::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
