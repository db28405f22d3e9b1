//! Experiment runner: configuration, dispatch to the laboratory's suites,
//! and report emission.

// `!(x > y)` rejects NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod catalog;
pub mod config;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, ExperimentKind, ModelConfig, Thresholds};
pub use report::{Check, ExperimentReport, Payload, Series};
pub use runner::run;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Unparseable or out-of-range configuration, or an unwritable path.
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Lab(#[from] hormander_lab::Error),
}

impl CliError {
    pub const INPUT_EXIT: u8 = 1;
    pub const ASSERTION_EXIT: u8 = 2;
}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
