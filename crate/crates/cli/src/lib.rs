//! Config-driven front end for `geoconn`.
//!
//! The binary `geoconn` wraps [`commands::execute`]; everything here is also
//! usable as a library, which is how the acceptance suite drives it.

pub mod checks;
pub mod commands;
pub mod config;
pub mod model;
pub mod output;

pub use commands::{execute, Command, CommandOutput, Format, RunOptions};
pub use config::RunConfig;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_CHECK_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
    #[error("numeric error: {0}")]
    Numeric(#[from] geoconn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) | CliError::Numeric(_) => EXIT_RUNTIME,
        }
    }
}
