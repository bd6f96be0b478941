use std::path::PathBuf;

use thiserror::Error;

use crate::flow::FlowState;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("shape mismatch: expected {expected} values, got {actual}")]
    ShapeMismatch { expected: usize, actual: usize },

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("non-finite value at node {node}")]
    NonFinite { node: usize },

    #[error("degenerate sphere projection at node {node} (|raw| = {norm:e})")]
    DegenerateProjection { node: usize, norm: f64 },

    #[error("region must stay at boundary depth >= {required} (node {node} has depth {depth})")]
    RegionTooShallow { required: u32, node: usize, depth: u32 },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("step size underflow after {halvings} halvings at t = {}", .state.t)]
    Stagnation { halvings: u32, state: Box<FlowState> },

    #[error("eigen solver did not converge in {iterations} iterations (residual {residual:e})")]
    EigenNonConvergence { iterations: usize, residual: f64 },

    #[error("linear solver did not converge in {iterations} iterations (residual {residual:e})")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("config: {0}")]
    Config(String),

    #[error("field file {path}: {reason}")]
    FieldFormat { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code used by the scenario runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidGrid(_) | Error::InvalidDomain(_) => 2,
            Error::FieldFormat { .. } | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
