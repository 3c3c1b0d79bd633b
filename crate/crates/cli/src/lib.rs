//! Batch entry points for the triage pipeline. Every command writes its
//! outputs plus a run manifest; tables come out as TSV ready for plotting.

pub mod cli;
pub mod commands;
pub mod error;
pub mod manifest;
pub mod settings;

pub use cli::{Cli, Command};
pub use commands::run;
pub use error::{CliError, CliResult};
pub use manifest::RunManifest;
