use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid Lebesgue exponent p = {0} (need p >= 1)")]
    InvalidExponent(f64),
    #[error("exponent error: need n > 2m, got n = {n}, m = {m}")]
    DimensionOrder { n: usize, m: usize },
    #[error("zeta is not isotropic: |zeta.zeta| = {residual:e} exceeds tolerance")]
    NotIsotropic { residual: f64 },
    #[error("zeta is the zero vector")]
    ZeroVector,
    #[error("point outside chart ({j}, {sign}): {reason}")]
    OutOfChart {
        j: usize,
        sign: char,
        reason: String,
    },
    #[error(
        "1/p_zeta^{m} is not locally integrable for m >= 2; use the chart backend or allow_unsafe"
    )]
    NotLocallyIntegrable { m: usize },
    #[error("chart eta-grid does not cover the chart image: {0}")]
    Coverage(String),
    #[error("grid mismatch between operator and field")]
    GridMismatch,
    #[error("sigma = {sigma} outside the admissible window (-{m}, {upper})", upper = 1.0 - *m as f64)]
    InvalidSigma { sigma: f64, m: usize },
    #[error("Neumann series diverged: observed contraction factor {factor:.4}")]
    SeriesDiverged { factor: f64 },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(
        "assumption (A) violated: smallest singular value {sigma_min:e} of the interior block"
    )]
    AssumptionAViolated { sigma_min: f64 },
    #[error("frame infeasible: s = {s} < |xi|/2 = {half_norm}")]
    FrameInfeasible { s: f64, half_norm: f64 },
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
