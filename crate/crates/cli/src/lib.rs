//! Command-line front end for morphology-constrained counterfactual search.
//!
//! The binary is a thin wrapper around [`commands::dispatch`]; the pipelines
//! in [`pipeline`] are usable without touching the file system.

pub mod commands;
pub mod config;
pub mod output;
pub mod pipeline;

pub use config::ExperimentConfig;
