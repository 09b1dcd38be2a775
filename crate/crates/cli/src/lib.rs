//! Experiment runner for `mshlab`: JSON configs in, JSON/CSV reports out.

pub mod config;
pub mod experiments;
pub mod report;
pub mod run;

pub use config::{ConfigError, Experiment, RunConfig};
pub use report::RunReport;
pub use run::{execute, write_outputs};
