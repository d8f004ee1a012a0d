//! Experiment harness: synthetic block-model graphs, noise injection, the
//! pruning, ablation, sweep, robustness and overhead protocols, and
//! append-only run records.

pub mod config;
pub mod error;
pub mod noise;
pub mod overhead;
pub mod protocols;
pub mod prune;
pub mod records;
pub mod report;
pub mod sbm;

pub use config::RunConfig;
pub use error::{HarnessError, Result};
pub use records::{ExperimentRecord, RunMode, RunSpec};
