//! Std companion to `gated-depth-core`: file formats, configuration,
//! parallel drivers and the `gdl` experiment runner.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;
pub mod parallel;

pub use config::ExperimentConfig;
pub use error::{CliError, Result};
