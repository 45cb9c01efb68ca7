use thiserror::Error;

/// Last state of a Rayleigh-quotient minimisation that ran out of iterations.
#[derive(Debug, Clone)]
pub struct StalledIterate {
    pub iterate: Vec<f64>,
    pub history: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum FracError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("grid under-resolves the oscillation: h = {h:.3e} > eps/2 = {half_eps:.3e}")]
    UnderResolved { h: f64, half_eps: f64 },

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("minimiser did not converge within {iters} iterations (last quotient {last:.6e})")]
    NoConvergence {
        iters: usize,
        last: f64,
        state: Box<StalledIterate>,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("cache error: {0}")]
    Cache(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl FracError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        FracError::InvalidArgument(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FracError>;
