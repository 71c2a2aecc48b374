//! Experiment runner and CLI for the `tunamh` samplers.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bias;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod presets;
pub mod task;
pub mod tune;
pub mod verify;

pub use config::{DataSource, ExperimentConfig, InitSpec, KernelSpec, TaskConfig};
pub use error::{HarnessError, Result};
pub use experiment::{execute, run_experiment, ResultManifest, RunOptions};
pub use tune::{tune_acceptance, TuneOptions, TuneResult};
