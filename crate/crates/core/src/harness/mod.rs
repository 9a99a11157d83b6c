//! Experiment orchestration: configuration, seed sweeps, output files,
//! regret-growth fits and constant calibration.

pub mod calibrate;
pub mod config;
pub mod fit;
pub mod run;

pub use calibrate::{calibrate, Calibration};
pub use config::{Algorithm, ExperimentConfig, RegretEstimator, ResolvedPlant};
pub use fit::{fit_regret_growth, GrowthFit};
pub use run::{run_experiment, Prepared, RunOptions, RunRecord, Summary};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl HarnessError {
    /// Process exit code for the command line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::InsufficientData(_) => 3,
            HarnessError::Io(_) => 1,
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}
