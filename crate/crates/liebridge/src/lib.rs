//! Experiment runner for `liebridge-core`: configuration, parallel execution
//! and deterministic CSV/JSON artifacts.

pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod run;

pub use config::{parse_config, parse_config_with, Experiment, ExperimentConfig};
pub use error::CliError;
pub use exec::Parallel;
pub use output::RunManifest;
pub use run::{run_experiment, run_experiment_with};
