use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid offspring law: {0}")]
    InvalidOffspring(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("laplace inversion failed at t = {t}: values {coarse} and {fine} differ by more than {tol:e} relative")]
    InversionFailure {
        t: f64,
        coarse: f64,
        fine: f64,
        tol: f64,
    },
    #[error("no closed form available: {0}")]
    NoClosedForm(String),
    #[error("degenerate quantity: {0}")]
    Degenerate(String),
    #[error("solver did not converge after {iterations} iterations (last update {last_update:e})")]
    NonConvergence {
        iterations: usize,
        last_update: f64,
        history: Vec<f64>,
    },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("truncation rate {rate:.4} at level {level} exceeds the 1% limit")]
    Truncation { level: f64, rate: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
