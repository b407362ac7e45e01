//! Scenario ingestion, command dispatch and artifact emission for the `isac` binary.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use commands::{run, Cli};
pub use error::CliError;
pub use scenario::ScenarioFile;
