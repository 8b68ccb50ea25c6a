//! Command-line front end: dataset files, the simulate, estimate, evaluate
//! and inspect subcommands, and run reports.

pub mod commands;
pub mod dataset;
pub mod error;
pub mod files;
pub mod report;

pub use error::{CliError, Result};
