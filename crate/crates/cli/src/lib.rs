//! Library side of the `gateway-shield` command-line tool: scenario file
//! loading with `key=value` overrides, and the subcommand implementations.

pub mod commands;
pub mod error;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use scenario::ScenarioFile;
