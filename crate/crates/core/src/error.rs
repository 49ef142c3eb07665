use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the numerical routines in this crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// The problem description violates a structural invariant
    /// (ellipticity, ordering of the fractional orders, sign hypotheses).
    #[error("invalid problem specification: {0}")]
    Spec(String),

    /// A linear solve, eigensolve or quadrature failed.
    #[error("numerical failure: {0}")]
    Numeric(String),

    /// The requested accuracy could not be reached; carries the best estimate.
    #[error("accuracy not attained: estimate {value} with error {est_error:e}")]
    Accuracy { value: Complex64, est_error: f64 },

    /// An iteration stopped before reaching its tolerance.
    #[error("no convergence after {iterations} iterations (last difference {last:e})")]
    NonConvergence { iterations: usize, last: f64, history: Vec<f64> },

    /// The Laplace inversion contour cannot resolve the requested time.
    #[error("contour resolution: {0}")]
    ContourResolution(String),

    /// The power-law tail fitted to an observation is not trustworthy.
    #[error("tail fit rejected: {0}")]
    Tail(String),

    /// The two order sets coincide, so the discriminator is undefined.
    #[error("degenerate order pair: {0}")]
    Degenerate(String),

    /// Vector or matrix dimensions disagree.
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Shape { expected, got })
    }
}
