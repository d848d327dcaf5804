//! Experiment harness for the `qal` command-line tool.

pub mod config;
pub mod experiments;

pub use config::{data_root, ExperimentConfig};
pub use experiments::{prepare, Prepared};
