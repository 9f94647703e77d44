//! Config parsing and subcommands of the `optswitch` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod commands;
pub mod config;
pub mod error;

pub use commands::{Command, Overrides, Run, Solved};
pub use config::RunConfig;
pub use error::CliError;
