//! Scenario-file front end: resolves presets and custom models, runs them
//! and writes `curves.csv`, `meta.txt` and `plot.gp`.

use std::path::PathBuf;

pub mod config;
pub mod figures;
pub mod output;
pub mod run;
pub mod scenario;

pub use config::{RunKind, ScenarioConfig};
pub use run::{compute, run_config_text, RunOptions, RunReport, RunResult};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Schema(String),
    #[error(transparent)]
    Core(#[from] second_lab_core::Error),
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

pub const EXIT_SCHEMA: i32 = 2;
pub const EXIT_INTEGRATION: i32 = 3;
pub const EXIT_EMPTY_ENSEMBLE: i32 = 4;
pub const EXIT_IO: i32 = 5;

fn core_exit_code(e: &second_lab_core::Error) -> i32 {
    use second_lab_core::Error as E;
    match e {
        E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Configuration(_) => EXIT_SCHEMA,
        E::NumericalDomain { .. } | E::IntegrationFailure { .. } | E::UndefinedPhase { .. } => EXIT_INTEGRATION,
        E::EmptyEnsemble { .. } => EXIT_EMPTY_ENSEMBLE,
        E::ScanCell { source, .. } => core_exit_code(source),
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => EXIT_SCHEMA,
            CliError::Core(e) => core_exit_code(e),
            CliError::Io { .. } => EXIT_IO,
        }
    }
}
