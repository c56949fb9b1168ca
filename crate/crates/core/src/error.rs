use thiserror::Error;

/// Errors raised by the numerical substrate, the operator catalog and the
/// verification pipelines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },

    #[error("delay tau={tau} is not an integer multiple of the grid step h={h}")]
    DelayMisaligned { tau: f64, h: f64 },

    #[error("invalid delay kernel: {0}")]
    InvalidDelay(String),

    #[error("integration failed at step {step} (t={t}): {reason}")]
    Integration { step: usize, t: f64, reason: String },

    #[error("eta={eta} is singular for period {period}: |exp(eta*T)-1| < 1e-12")]
    SingularEta { eta: f64, period: f64 },

    #[error("operator {operator} is not defined for problem kind {kind}")]
    IncompatibleProblem { operator: String, kind: String },

    #[error("operator {operator} requires parameter {param}")]
    MissingParam { operator: String, param: String },

    #[error("space mismatch: {0}")]
    SpaceMismatch(String),

    #[error("not a projector: {0}")]
    NotProjector(String),

    #[error("uncertifiable degree: {0}")]
    Uncertifiable(String),

    #[error("operator is not of the form i∘F∘π: {0}")]
    NotReducible(String),

    #[error("fourier block collision: {0}")]
    Collision(String),

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("invalid problem at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn ensure_finite(values: &[f64], context: impl FnOnce() -> String) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { context: context() })
    }
}
