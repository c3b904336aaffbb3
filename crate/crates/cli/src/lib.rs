//! File formats and command-line driver for the action tube pipeline.
//!
//! See `FORMATS.md` at the crate root for the on-disk layouts.

pub mod atb;
pub mod bundle;
pub mod commands;
pub mod config;
pub mod error;
pub mod jsonl;

pub use commands::{run, Cli};
pub use error::{CliError, CliResult};
