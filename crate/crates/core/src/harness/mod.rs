//! Synthetic data, dataset I/O, metrics and experiment drivers.

pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod synth;
