use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("support does not have a full-dimensional convex hull")]
    NotFullDimensional,

    #[error("point is not a root: relative residual {residual:e} exceeds {tolerance:e}")]
    NotARoot { residual: f64, tolerance: f64 },

    #[error("coefficient vector {index} is zero")]
    ZeroComponent { index: usize },

    #[error("region is empty")]
    EmptyRegion,

    #[error("region is unbounded in the p-directions")]
    UnboundedRegion,

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("{what} did not converge: estimate {value:e}, residual {residual:e}")]
    NonConvergence {
        what: &'static str,
        value: f64,
        residual: f64,
    },

    #[error("degenerate system: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;
