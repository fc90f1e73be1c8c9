use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("node id {0} out of range (n = {1})")]
    NodeOutOfRange(usize, usize),

    #[error("graph is empty")]
    EmptyGraph,

    #[error("graph is disconnected ({components} components)")]
    DisconnectedGraph { components: usize },

    #[error("node sets differ: {left} vs {right} nodes")]
    NodeSetMismatch { left: usize, right: usize },

    #[error("solver did not converge: {context} (residual {residual:.3e} after {iterations} iterations)")]
    NotConverged {
        context: &'static str,
        residual: f64,
        iterations: usize,
    },

    #[error("dense oracle cap exceeded: n = {n} > cap = {cap}")]
    OracleCapExceeded { n: usize, cap: usize },

    #[error("invalid edge weight {weight} on edge ({u}, {v})")]
    InvalidWeight { u: usize, v: usize, weight: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("node {0} is isolated in the input manifold")]
    IsolatedNode(usize),

    #[error("cut through the input graph is zero for the given subset")]
    ZeroCut,

    #[error("perturbation budget infeasible: requested {requested}, only {available} candidates")]
    InfeasibleBudget { requested: usize, available: usize },

    #[error("bad matrix entry at row {row}: {reason}")]
    BadMatrixEntry { row: usize, reason: String },

    #[error("output row {row} is not a probability distribution (sum = {sum})")]
    NotADistribution { row: usize, sum: f64 },

    #[error("parse error in {path} at line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
