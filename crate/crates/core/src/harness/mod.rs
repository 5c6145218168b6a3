//! Scenario configuration, full runs (plant, bank and switching), the Monte
//! Carlo robustness study and result files.

mod export;
mod montecarlo;
mod run;
mod scenario;

pub use export::{
    export_results, fmt_f64, trajectory_header, write_bands, write_metrics, write_switchlog, write_trajectory,
    write_trials,
};
pub use montecarlo::{monte_carlo, percentile, Band, MonteCarloSummary, PerturbationSpec, Target, TrialOutcome};
pub use run::{run_case, run_with_plant, ObserverTrack, RunResult, TrackFailure, SWO_LABEL};
pub use scenario::{load_scenario, parse_scenario, save_scenario, Scenario, SPECIAL_CASE_T_OP};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::ModelError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid scenario: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
    #[error("serialization failed: {0}")]
    Serialize(String),
    #[error("perturbation: {0}")]
    Perturbation(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        HarnessError::Io { path: path.to_path_buf(), message: e.to_string() }
    }
}
