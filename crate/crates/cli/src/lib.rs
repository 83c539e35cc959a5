//! File formats and command implementations behind the `latentgaze` binary.

pub mod commands;
pub mod error;
pub mod format;
pub mod model;
pub mod report;

pub use commands::{run, Cli};
pub use error::{CliError, Result};
