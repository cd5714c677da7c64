//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid norm: {0}")]
    InvalidNorm(String),

    #[error("bracket does not straddle the boundary: {0}")]
    Bracket(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported dimension for {what}: {dim}")]
    UnsupportedDimension { what: &'static str, dim: usize },

    #[error("configuration error: {0}")]
    Config(String),

    /// Iterative solve did not reach the requested tolerance. Carries the
    /// residual history so callers can inspect the convergence curve.
    #[error("iteration limit {max_iters} reached, residual {last_residual:e}")]
    IterationLimit {
        max_iters: usize,
        last_residual: f64,
        residuals: Vec<f64>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
