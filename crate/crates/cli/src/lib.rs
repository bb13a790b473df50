//! Experiment runner: configuration, stages and the output manifest.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;

pub use commands::{Command, Experiment};
pub use config::{ExperimentConfig, Finding};
pub use error::{CliError, Result};
pub use manifest::Manifest;
