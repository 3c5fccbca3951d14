//! Command-line front end: experiment configs, the four subcommands, and
//! their CSV/JSON artifacts.

pub mod commands;
pub mod config;
pub mod error;

pub use config::{ExperimentConfig, Overrides, Resolved};
pub use error::{CliError, EXIT_CONFIG, EXIT_RUNTIME};
