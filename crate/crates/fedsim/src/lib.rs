//! Std front end for `fedspeed-core`: JSON experiment configs, CSV datasets,
//! partition files, a rayon client executor, identity-probe suites, sweeps
//! and the `fedsim` command line.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod dataset_csv;
pub mod error;
pub mod executor;
pub mod experiment;
pub mod partition_file;
pub mod sweep;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{FedsimError, Result};
pub use experiment::{run_experiment, ExperimentOutcome, Summary};
