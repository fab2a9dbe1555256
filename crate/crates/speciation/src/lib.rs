//! Experiment runner for semantic speciation studies: TOML configs, a
//! rayon executor, CSV/JSON output and the commands behind the
//! `speciation` binary.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod exec;
pub mod output;
pub mod validate;

pub use commands::RunError;
pub use config::{ConfigError, ExperimentConfig};
pub use exec::RayonExecutor;
pub use output::{Cell, Fingerprint, Table};
