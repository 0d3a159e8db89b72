//! Datasets, caches, checkpoints, run configuration, reports and the CLI.

pub mod cache;
pub mod cli;
pub mod checkpoint;
pub mod config;
pub mod experiment;
pub mod manifest;
pub mod report;
pub mod synth;
