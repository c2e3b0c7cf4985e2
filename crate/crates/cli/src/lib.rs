//! Experiment harness for the CSI feedback laboratory.
//!
//! The `csilab` binary wires the channel simulator and the codec
//! substrate into reproducible studies: paired dataset builds, the
//! uplink/downlink correlation reports, the band-gap/bandwidth sweep,
//! codec training and evaluation, the full protocol grid, and the
//! compressive-sensing baseline. The library half exposes the same
//! machinery for integration tests and for embedding.
//!
//! Reproducibility is the organizing rule: every result record embeds the
//! seed and coordinates it was produced from, and replaying a cell
//! regenerates its dataset, its initialisation, and its metrics exactly.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod pipeline;
pub mod report;
pub mod svg;

pub use commands::{run, Cli, Command};
pub use config::{CellVariant, ExperimentConfig, Scenario};
pub use error::{Error, Result};
pub use experiment::{run_cell, run_experiment, CellSpec, ExperimentReport, ResultRecord};
