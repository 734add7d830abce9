use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("regime index {index} out of range for a state space of size {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("quadrature produced a non-finite value at node x = {node}")]
    Quadrature { node: f64 },

    /// All particle or posterior mass vanished.
    #[error("filter diverged at observation step {step}: total likelihood mass is zero")]
    Divergence { step: usize },

    #[error("cannot resample: weight vector has no positive mass")]
    ZeroWeights,

    #[error("grid oracle needs {required} cell-steps but the budget is {budget}")]
    OracleBudget { required: u64, budget: u64 },

    #[error("the Rao-Blackwellized filter requires a linear observation function h(x) = c*x")]
    NonlinearObservation,

    #[error("the Rao-Blackwellized filter requires an intensity matrix that does not depend on x")]
    StateDependentIntensity,

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("volatility function must be strictly positive; got h = {value} at fine step {step}")]
    NonPositiveVolatility { step: usize, value: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
