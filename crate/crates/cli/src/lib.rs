//! Experiment harness for the multifrac solvers: TOML configs in, CSV
//! artifacts and pass/fail reports out.

// `!(x > 0.0)` is used on purpose: it also rejects NaN. Oracle constants
// keep the digits they were published with.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod commands;
pub mod config;
pub mod error;
pub mod expr;
pub mod output;
pub mod suite;

pub use config::Config;
pub use error::CliError;
