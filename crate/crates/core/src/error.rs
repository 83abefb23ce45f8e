use thiserror::Error;

/// Errors raised by model construction, the eigenvalue solver and the propagators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("index {index} out of range 1..={len}")]
    Index { index: usize, len: usize },

    #[error("invalid levels: {0}")]
    InvalidLevels(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("not a probability vector: {0}")]
    NotProbability(String),

    #[error("secular function evaluated at the pole -b_{m}")]
    Pole { m: usize },

    #[error("bracket for eigenvalue {k} is degenerate (width {width:e})")]
    Conditioning { k: usize, width: f64 },

    #[error("bracket for eigenvalue {k} has no sign change: {detail}")]
    Monotonicity { k: usize, detail: String },

    #[error("eigenvector {k} fails its eigen-equation (relative residual {residual:e})")]
    Consistency { k: usize, residual: f64 },

    #[error("basis is near-degenerate at index {j} (projected norm ratio {ratio:e})")]
    NearDegenerate { j: usize, ratio: f64 },

    #[error("integrator step underflow at tau = {tau_reached} (step {step:e})")]
    Stiffness { tau_reached: f64, step: f64 },

    #[error("decay fit needs {needed}: {detail}")]
    InsufficientData { needed: String, detail: String },

    #[error("power iteration did not converge after {iterations} iterations (spectral gap too small)")]
    NoConvergence { iterations: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
