//! Command-line entry points and the local session service.

pub mod backend;
pub mod cli;
pub mod config;
mod error;
pub mod service;
pub mod target;

pub use cli::dispatch;
pub use error::CliError;
