//! Command-line front end and annotation service.

pub mod annotation;
pub mod commands;
pub mod error;
pub mod server;

pub use commands::{run, Cli};
pub use error::CliError;
