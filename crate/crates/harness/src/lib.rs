//! Experiment grids, reports and acceptance checks for modular conformal calibration.

pub mod checks;
pub mod config;
pub mod datasets;
pub mod error;
pub mod report;
pub mod runner;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::{emit_intervals, emit_report, ExperimentReport, IntervalReport};
pub use runner::{run_experiment, run_interval_comparison};
