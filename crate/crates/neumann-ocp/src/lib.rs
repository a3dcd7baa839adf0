//! Command line front end for `neumann-ocp-core`: JSON run configurations,
//! the text mesh format, convergence studies with CSV and SVG output, and
//! KKT audits.

pub mod config;
pub mod meshio;
pub mod plot;
pub mod report;
pub mod run;
pub mod study;

pub use config::{Layers, Mode, StudyConfig, Sweep};

use neumann_ocp_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Mesh(#[from] meshio::MeshIoError),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Solver(#[from] CoreError),
    #[error("kkt audit failed: {0}")]
    Audit(String),
}

impl RunError {
    /// 0 success, 1 configuration, 2 solver non-convergence, 3 numeric or
    /// internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Mesh(_) => 1,
            RunError::Solver(CoreError::NonConvergence { .. } | CoreError::Cycling { .. }) => 2,
            RunError::Solver(CoreError::InvalidArgument(_) | CoreError::InvalidCoefficient { .. }) => 1,
            _ => 3,
        }
    }
}
