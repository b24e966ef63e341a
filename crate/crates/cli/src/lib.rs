//! Command-line tools and HTTP services for convex primitive scenes.

pub mod commands;
pub mod config;
pub mod error;
pub mod remote;
pub mod server;
pub mod stub_server;

pub use error::CliError;
