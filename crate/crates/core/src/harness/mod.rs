//! Metrics, configuration, checkpoints and the experiment runner.

pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod metrics;
