use thiserror::Error;

use crate::conic::SolveStatus;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("degree overflow: need moments up to degree {needed}, sequence holds {available}")]
    DegreeOverflow { needed: usize, available: usize },

    #[error("relaxation order {order} too small: minimal admissible order is {minimal}{}",
        .constraint.map(|j| format!(" (forced by constraint {j})")).unwrap_or_default())]
    OrderTooSmall {
        order: usize,
        minimal: usize,
        constraint: Option<usize>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("schema error at {path}: {message}")]
    Schema { path: String, message: String },

    #[error("solver returned status {0}")]
    Solver(SolveStatus),

    #[error("inner program infeasible at x = {x:?}: Y_x appears to be empty")]
    InnerInfeasible { x: Vec<f64> },

    #[error("grid oracle is limited to n <= 2 and p <= 2 (got n = {n}, p = {p})")]
    ScaleGuard { n: usize, p: usize },

    #[error("external solver failed: {0}")]
    External(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
