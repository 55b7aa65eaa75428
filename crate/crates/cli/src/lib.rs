//! Command-line front end: experiment drivers for the simulation tables,
//! file output, and one-shot commands over user data.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{ConfigOverrides, RunOptions};
pub use error::{CliError, CliResult};
pub use experiments::{run_experiment, Experiment, ExperimentReport};
