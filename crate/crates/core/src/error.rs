use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KamError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(i64),
    #[error("integer overflow in exact arithmetic")]
    Overflow,
    #[error("automorphisms do not commute")]
    NotCommuting,
    #[error("Jordan case out of scope: {0}")]
    JordanCase(String),
    #[error("eigen-decomposition failed: {0}")]
    Eigen(String),
    #[error("orbit search bound exceeded for n = {0:?}")]
    SearchBound(Vec<i64>),
    #[error("Katznelson floor violated at n = {n:?}: {value} < {floor}")]
    Katznelson { n: Vec<i64>, value: f64, floor: f64 },
    #[error("support escapes working box {limit} (needs {needed})")]
    SupportEscape { needed: usize, limit: usize },
    #[error("grid size {grid} too small for box {box_} (need >= {need})")]
    GridTooSmall { grid: usize, box_: usize, need: usize },
    #[error("parameter family needs at least two nodes")]
    TooFewNodes,
    #[error("small divisor {value:.3e} below {threshold:.3e} at m = {m:?}")]
    SmallDivisor { m: Vec<i64>, value: f64, threshold: f64 },
    #[error("nonvanishing obstruction {value:.3e} at n = {n:?}, m = {m:?}")]
    Obstruction { n: Vec<i64>, m: Vec<i64>, value: f64 },
    #[error("solution sums disagree by {0:.3e}")]
    SumDisagreement(f64),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("commutation residual {residual:.3e} exceeds {tol:.1e}")]
    Commutation { residual: f64, tol: f64 },
    #[error("near-identity map too large: |h|_1 = {0:.3e}")]
    NotNearIdentity(f64),
    #[error("fixed-point iteration did not converge ({0:.3e} after cap)")]
    NoConvergence(f64),
    #[error("frequency not monotone on interval [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },
    #[error("measure certificate failed: kept {kept} < bound {bound}")]
    MeasureBound { kept: f64, bound: f64 },
    #[error("unstable derivative estimate: {0}")]
    Unstable(String),
    #[error("io: {0}")]
    Io(String),
    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, KamError>;

impl From<std::io::Error> for KamError {
    fn from(e: std::io::Error) -> Self {
        KamError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for KamError {
    fn from(e: serde_json::Error) -> Self {
        KamError::Format(e.to_string())
    }
}
