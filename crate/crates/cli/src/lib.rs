//! Configuration, presets and the experiment pipeline behind the `plate` binary.

pub mod compare;
pub mod config;
pub mod experiment;

pub use compare::{compare_runs, CompareReport};
pub use config::{preset, DataSpec, RunConfig, PRESETS};
pub use experiment::{run_experiment, sweep, Manifest};

use thiserror::Error;

/// Process exit status of a successful run.
pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_STRUCTURE: i32 = 3;
pub const EXIT_BOUND: i32 = 4;
pub const EXIT_ANALYSIS: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("material model rejected: {0}")]
    Structure(String),

    #[error("{0}")]
    Bound(String),

    #[error("analysis failed: {0}")]
    Analysis(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Structure(_) => EXIT_STRUCTURE,
            CliError::Bound(_) => EXIT_BOUND,
            CliError::Analysis(_) | CliError::Io(_) => EXIT_ANALYSIS,
        }
    }
}

impl From<plate_core::Error> for CliError {
    fn from(e: plate_core::Error) -> Self {
        use plate_core::Error as E;
        match e {
            E::InvalidGrid(_)
            | E::InvalidArgument(_)
            | E::Shape { .. }
            | E::GridMismatch
            | E::Json(_) => CliError::Config(e.to_string()),
            E::StructureViolation(_) | E::NonUnitDirection(_) => CliError::Structure(e.to_string()),
            E::BoundViolation { .. } => CliError::Bound(e.to_string()),
            E::Io(io) => CliError::Io(io),
            E::PicardDivergence { .. } | E::Quadrature { .. } => CliError::Analysis(e.to_string()),
        }
    }
}
