//! Experiment driver for `ymh-core`: configuration, CSV output and the
//! canned experiments behind the `ymh` binary.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;
pub mod experiments;

pub use commands::Command;
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
