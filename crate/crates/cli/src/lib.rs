//! Configuration, experiment runner and CSV output behind the `nvgatesim`
//! command.

pub mod config;
pub mod run;
pub mod steps;
pub mod units;

pub use config::{parse_config, ConfigError, Experiment, ExperimentConfig};
pub use run::{compute, run, RunError};
