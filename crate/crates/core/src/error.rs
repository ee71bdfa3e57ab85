use thiserror::Error;

/// Errors raised across the controller, estimator and harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("Riccati iteration did not converge after {iterations} iterations (last update {residual:e})")]
    NonConvergent { iterations: usize, residual: f64 },

    #[error("matrix is not positive definite: {0}")]
    NonPositiveDefinite(&'static str),

    #[error("no admissible point inside the confidence ellipsoid")]
    NoFeasiblePoint,

    #[error("parameter is not admissible: {0}")]
    Inadmissible(String),

    #[error("learning database is empty")]
    EmptyDatabase,

    #[error("attack signal norm {norm} exceeds budget {budget}")]
    BudgetViolation { norm: f64, budget: f64 },

    #[error("trace lengths differ: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("missing optimistic parameter snapshot for step {0}")]
    MissingSnapshot(usize),

    #[error("invalid bound constants: {0}")]
    InvalidConstants(String),

    #[error("regret curve is degenerate: {0}")]
    DegenerateCurve(String),

    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("state norm {norm:e} exceeded guard {guard:e} at step {step}")]
    StateBlowUp { step: usize, norm: f64, guard: f64 },

    #[error("invalid config key `{key}`: {reason}")]
    ConfigInvalid { key: String, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
