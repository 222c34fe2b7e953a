//! Experiment runner: data generation, training runs, DAMS hyperparameter
//! sweeps, standalone evaluation and plot-data extraction.

pub mod commands;
pub mod config;
pub mod error;
pub mod run;
pub mod sweep;

pub use error::{CliError, Result};
