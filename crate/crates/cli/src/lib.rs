//! Command-line front end for `tullock-core`: scenario files in, CSV traces
//! and JSON reports out.

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use error::CliError;
