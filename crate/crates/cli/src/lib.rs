//! Command-line front end for the vproj solvers: single fits with
//! replayable artifacts, experiment reports, property suites and rate probes.

pub mod artifact;
pub mod commands;
pub mod config;
pub mod error;

pub use commands::run;
pub use config::Cli;
pub use error::{CliError, CliResult};
