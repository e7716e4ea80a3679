//! Command-line front end: attribution, steering vectors, α sweeps and
//! experiment runs driven by a TOML config.

pub mod commands;
pub mod config;
pub mod error;
pub mod fixtures;
pub mod pipeline;
pub mod report;
pub mod svg;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
