//! Library surface of the `seqtag` command-line tool, split out so the
//! integration tests can drive the commands in process.

pub mod commands;
pub mod config;
pub mod error;
pub mod model_io;

pub use error::{CliError, CliResult};
