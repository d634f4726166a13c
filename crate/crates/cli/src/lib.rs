//! Subcommands of the `bedexit` executable, usable as a library.

pub mod commands;
pub mod config;
pub mod error;
pub mod files;
pub mod plot;

pub use config::RunConfig;
pub use error::CliError;
