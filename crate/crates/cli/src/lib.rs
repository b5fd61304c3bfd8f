//! Experiment runner: configuration, training loop, evaluation and
//! artifact commands shared by the `calfoa` binary and the acceptance suite.

pub mod config;
pub mod error;
pub mod grid;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
