//! Command-line pipeline and session collection server.

pub mod bundle;
pub mod commands;
pub mod server;

pub use commands::{run, Cli};
