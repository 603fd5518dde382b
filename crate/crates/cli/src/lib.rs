//! Command-line front end for the `airmap` toolkit: dataset layout, file
//! formats, configuration and the `synth`, `validate`, `fuse`, `register`,
//! `eval` and `pipeline` subcommands.

pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod error;
pub mod formats;

pub use error::{CliError, Result};
