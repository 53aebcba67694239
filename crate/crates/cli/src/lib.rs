//! Configuration, pipeline stages and artifact writers behind the `pepsim` command.

pub mod artifacts;
pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
