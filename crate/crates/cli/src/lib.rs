//! Experiment runner for the `kerrcat` library: TOML configs in, CSV tables
//! with JSON metadata out.

// `!(x >= 0.0)` is how NaN gets rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod output;
pub mod run;

pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};
pub use output::{Metadata, ResultTable};
pub use run::{execute, run, Overrides};
