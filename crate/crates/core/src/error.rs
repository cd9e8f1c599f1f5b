use thiserror::Error;

/// Errors raised by potentials, projections and the online engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An input lies outside the domain of a potential (non-finite values,
    /// negative coordinates for the entropy, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A dual coordinate exceeded the `sinh`/`cosh` overflow guard.
    #[error("overflow guard: dual coordinate {index} = {value:e} exceeds |z| <= {limit}")]
    Overflow { index: usize, value: f64, limit: f64 },

    /// Invalid parameters or violated preconditions.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An iterative solver or a decomposition failed.
    #[error("numerical error in {context}: residual {residual:e}")]
    Numerical { context: String, residual: f64 },

    /// Dimensions of the operands do not agree.
    #[error("shape mismatch: expected {expected}, got {found}")]
    Shape { expected: String, found: String },

    /// A potential/constraint pairing without an implemented projection.
    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: format!("length {expected}"),
            found: format!("length {found}"),
        })
    }
}
