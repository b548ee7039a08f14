use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    /// The penalty matrices do not jointly cover R^p (nontrivial kernel intersection).
    #[error("unsatisfiable assumption: {0}")]
    UnsatisfiableAssumption(String),

    /// A data-dependent assumption fails on this draw (Y = 0, a zero dual-noise term, ...).
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    /// Square-root link evaluated at a (numerically) zero residual.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("fixed-point iteration did not converge after {iterations} iterations (last relative residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        trace: Vec<Vec<f64>>,
    },

    #[error("invalid premise: {0}")]
    InvalidPremise(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("refusing to certify: {0}")]
    NotCertifiable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl ToString,
    found: impl ToString,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
