//! Experiment harness: configuration, training loop, metrics, comparisons
//! and reports around the optimizers in `amos-core`.

pub mod compare;
pub mod config;
pub mod memreport;
pub mod metrics;
pub mod ratio;
pub mod runner;
pub mod tables;

pub use config::RunConfig;
pub use runner::{run_experiment, RunSummary, Runner};
