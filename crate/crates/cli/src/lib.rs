//! Experiment runner for the truncated Euler–Maruyama SDDE solver.
//!
//! Subcommands map to [`commands`]; manifests are described in [`config`].

pub mod commands;
pub mod config;

pub use commands::{Outcome, Status};
pub use config::{Experiment, ExperimentConfig};
