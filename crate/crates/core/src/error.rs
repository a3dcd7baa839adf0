use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::ocp::{ActiveSet, OcpSolution};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid coefficient at ({x:.6}, {y:.6}): {reason}")]
    InvalidCoefficient { x: f64, y: f64, reason: String },

    #[error("incompatible mesh: {0}")]
    IncompatibleMesh(String),

    #[error("incompatible space: {0}")]
    IncompatibleSpace(String),

    #[error("incompatible hierarchy: {0}")]
    IncompatibleHierarchy(String),

    #[error("linear solve failed: {reason} (relative residual {residual:.3e})")]
    LinearSolveFailure { reason: String, residual: f64 },

    #[error("numeric failure: {0}")]
    NumericFailure(String),

    #[error("no convergence after {iterations} iterations (kkt residual {kkt_residual:.3e})")]
    NonConvergence {
        iterations: usize,
        kkt_residual: f64,
        best: Box<OcpSolution>,
    },

    #[error("active set cycling detected after {iterations} iterations")]
    Cycling {
        iterations: usize,
        history: Vec<Vec<ActiveSet>>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
