use thiserror::Error;

/// Failure modes surfaced by the numeric layers.
///
/// Numerical errors carry the quantity that triggered them (an eigenvalue, a
/// condition number, a sample count) so callers can report something more
/// useful than "it broke".
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("matrix is not PSD: smallest eigenvalue {min_eig:.6e} is below the clamping tolerance {tol:.6e}")]
    NotPsd { min_eig: f64, tol: f64 },

    #[error("matrix is numerically singular: smallest eigenvalue {min_eig:.6e}")]
    Singular { min_eig: f64 },

    #[error("eigendecomposition failed to converge for a {dim}x{dim} matrix")]
    NoConvergence { dim: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("insufficient sample: {m} draws cannot identify an {n}-dimensional second moment")]
    InsufficientSample { m: usize, n: usize },

    #[error("supervised extraction hit a numerically singular operator (condition estimate {cond:.3e}); the implied prior covariance is undefined")]
    IllConditioned { cond: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("slope fit needs strictly positive values; got {value:.6e} at m = {m}")]
    NonPositiveValue { m: usize, value: f64 },

    #[error("sweep aborted: {failed} of {total} cells failed (first: {first})")]
    SweepFailed {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Exit-code class: configuration errors are caller mistakes, everything
    /// else is a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::InvalidModel(_))
    }
}
