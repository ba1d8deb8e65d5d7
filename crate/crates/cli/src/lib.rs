//! Configuration, data ingestion and result persistence for the `gibbscal`
//! command-line tool.

pub mod canonical;
pub mod config;
pub mod dataset;
pub mod error;
pub mod run;

pub use config::{Command, Overrides, RunConfig};
pub use error::CliError;
