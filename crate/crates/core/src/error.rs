use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("oracle not converged: Richardson drift {drift:e} exceeds tolerance {tol:e}")]
    OracleNotConverged { drift: f64, tol: f64 },

    #[error("oracle domain too small: boundary mass {mass:e} exceeds {limit:e} (increase q_max)")]
    OracleDomain { mass: f64, limit: f64 },

    #[error("sampler diverged in chain {chain} at step {step}: energy {energy:e}")]
    SamplerDiverged { chain: u64, step: usize, energy: f64 },

    #[error("all importance weights underflowed")]
    WeightUnderflow,

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
