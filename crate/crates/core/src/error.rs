use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the solver and its building blocks.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("transfer function evaluation failed: zI - A is singular at z = {z}")]
    Evaluation { z: Complex64 },

    #[error("matrix is not Schur stable (spectral radius {spectral_radius:.6})")]
    Unstable { spectral_radius: f64 },

    #[error("prior is not minimum phase: root {root} has modulus {modulus:.6}")]
    NotMinimumPhase { root: Complex64, modulus: f64 },

    #[error("prior density is not positive on the unit circle (minimum {min_value:e})")]
    PriorNotPositive { min_value: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("C is not in the admissible factor set: {}", reasons.join("; "))]
    NotInCplus { reasons: Vec<String> },

    #[error("parameter is not in L+: minimum eigenvalue of G*(z) L G(z) on the grid is {min_eig:e}")]
    NotInLplus { min_eig: f64 },

    #[error("matrix is not in Range Gamma (relative projection residual {residual:e})")]
    NotInRange { residual: f64 },

    #[error("covariance is infeasible for this filter bank (relative projection residual {residual:e})")]
    Infeasible { residual: f64 },

    #[error("matrix does not belong to the factor space (relative residual {residual:e})")]
    NotInFactorSpace { residual: f64 },

    #[error("G*(z) C*C G(z) is near singular at theta = {theta:.6}")]
    NearBoundary { theta: f64 },

    #[error("Z + Z* is not positive on the unit circle (minimum eigenvalue {min_eig:e})")]
    NotPositiveReal { min_eig: f64 },

    #[error("{equation} did not converge after {iterations} iterations (last residual {last:e})")]
    SolverFailure {
        equation: &'static str,
        iterations: usize,
        history: Vec<f64>,
        last: f64,
    },

    #[error("degenerate Riccati solution: {0}")]
    Degenerate(String),

    #[error("Jacobian system is ill-conditioned (Gram condition number {cond:e})")]
    IllConditioned { cond: f64 },

    #[error("no admissible shift found for basis direction {index}")]
    ShiftExhausted { index: usize },

    #[error("Newton corrector failed at t = {t}: {reason}")]
    CorrectorFailure { t: f64, reason: String },

    #[error("continuation step fell below the floor {min_dt:e} at t = {t}: {reason}")]
    StepFloor { t: f64, min_dt: f64, reason: String },

    #[error("real-field invariant violated: imaginary part {imag:e}")]
    FieldViolation { imag: f64 },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by malformed input rather than solver trouble.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config { .. } | Error::Json(_) | Error::Dimension(_) | Error::InvalidInput(_)
        )
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
