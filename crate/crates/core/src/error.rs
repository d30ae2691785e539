use num_complex::Complex64;
use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("kernel is not finite at atom #{index} (s = {s}, t = {t})")]
    NonFiniteKernel { index: usize, s: f64, t: f64 },

    #[error("singular evaluation at atom #{index} (s = {s}, t = {t}) for z = {z}: {reason}")]
    SingularEvaluation {
        index: usize,
        s: f64,
        t: f64,
        z: Complex64,
        reason: &'static str,
    },

    #[error("solver did not converge at z = {z} after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence {
        z: Complex64,
        iterations: usize,
        residual: f64,
    },

    #[error("solver did not converge at abscissae {0:?}")]
    GridFailure(Vec<f64>),

    #[error("invariant violated at z = {z}: {what}")]
    InvariantViolation { z: Complex64, what: String },

    #[error("ambiguous atom at {location}: probes {coarse:.6} and {fine:.6} disagree")]
    AmbiguousAtom {
        location: f64,
        coarse: f64,
        fine: f64,
    },

    #[error("density reconstruction failed: {0}")]
    Density(String),

    #[error("invalid ensemble spec: {0}")]
    InvalidSpec(String),

    #[error("matrix of {entries} entries exceeds the cap of {cap}")]
    MemoryCap { entries: usize, cap: usize },

    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),

    #[error("replicate {replicate} failed: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("pooled KS distance {ks:.6} exceeds threshold {threshold:.6}")]
    ThresholdBreach { ks: f64, threshold: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence { .. } | Error::GridFailure(_) => 2,
            Error::ThresholdBreach { .. } => 3,
            Error::Replicate { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
