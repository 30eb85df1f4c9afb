//! Command-line front end: run configuration, commands and report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::run;
pub use config::{Cli, Command, RunConfig, Task};
pub use error::CliError;
