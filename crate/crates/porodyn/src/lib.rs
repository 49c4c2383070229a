//! Command-line front end for the `porodyn-core` solver, with the randomized
//! property harness and its file formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod harness;
pub mod io;

pub use config::{parse_config, parse_config_str, RunConfig};
pub use error::{CliError, Result};
pub use harness::{BatchSpec, PropertyResult};
