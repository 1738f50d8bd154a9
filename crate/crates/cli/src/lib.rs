//! Configuration-driven front end for the HDG solvers.

pub mod commands;
pub mod config;
pub mod report;

use hdg_core::HdgError;

pub use config::StudyConfig;

#[derive(Debug)]
pub enum CliError {
    Core(HdgError),
    /// A configured check (rate band, error bound) failed after the outputs were written.
    Acceptance(String),
}

impl From<HdgError> for CliError {
    fn from(e: HdgError) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Acceptance(m) => write!(f, "acceptance check failed: {m}"),
        }
    }
}

impl CliError {
    /// 1 config, 2 assembly, 3 solver, 4 acceptance-check failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(HdgError::Config(_) | HdgError::MeshParse { .. } | HdgError::Topology(_)) => 1,
            CliError::Core(HdgError::Assembly(_)) => 2,
            CliError::Core(HdgError::Solver(_) | HdgError::Analysis(_)) => 3,
            CliError::Acceptance(_) => 4,
        }
    }
}
