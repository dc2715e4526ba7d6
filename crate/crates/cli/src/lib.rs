//! Library side of the `bloch-transfer` command-line tool.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;

pub use config::{Overrides, Problem, RunConfig};
pub use error::CliError;
