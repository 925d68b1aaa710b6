//! File formats, command-line entry points and the local HTTP service for
//! `padfree-core`.

pub mod checkpoint;
pub mod commands;
pub mod dump;
pub mod error;
pub mod ppm;
pub mod request;
pub mod server;

pub use error::{CliError, CliResult};
