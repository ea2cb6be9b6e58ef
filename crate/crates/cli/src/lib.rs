//! Command-line driver: config loading, stage commands and exit codes.

pub mod commands;
pub mod config;
pub mod error;

pub use config::ExperimentConfig;
pub use error::CliError;
