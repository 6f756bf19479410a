use thiserror::Error;

/// Errors raised by the physics, fitting and synthesis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("eigen-decomposition residual {residual:.3e} exceeds tolerance {tolerance:.3e}")]
    EigenConvergence { residual: f64, tolerance: f64 },
    #[error("ambiguous eigenstate labeling: {0}")]
    AmbiguousLabel(String),
    #[error("field inversion did not converge: {0}")]
    NoConvergence(String),
    #[error("transition pair is outside the model: {0}")]
    OutOfModel(String),
    #[error("enumeration of {count} spins exceeds the cap of {cap}")]
    TooManySpins { count: usize, cap: usize },
    #[error("invalid fit problem: {0}")]
    InvalidProblem(String),
    #[error("no peak: |amplitude| {amplitude:.3e} below twice the residual deviation {residual_sd:.3e}")]
    NoPeak { amplitude: f64, residual_sd: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("reference channels degenerate at point {index}: |REF1 - REF2| = {gap:.3e}")]
    DegenerateReference { index: usize, gap: f64 },
    #[error("parameter kind mismatch: sequence is {sequence}, truth is {truth}")]
    KindMismatch { sequence: String, truth: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
