//! Command-line front end: CSV ingestion, run configuration and the `estimate`,
//! `simulate` and `report` commands.

pub mod app;
pub mod config;
pub mod error;
pub mod estimate;
pub mod ingest;
pub mod output;
pub mod report;
pub mod simulate;

pub use config::RunConfig;
pub use error::{exit_code, CliError};
