//! Batch front end for the spectral fractional porous-medium lab: JSON run
//! configurations, orchestration of solves and verification pipelines,
//! parameter sweeps over a worker pool, and report/plot-data emission.

pub mod commands;
pub mod config;
pub mod run;

pub use commands::{cmd_elliptic, cmd_green, cmd_report, cmd_solve, cmd_sweep, cmd_verify, CliOptions};
pub use config::{RunConfig, SweepConfig};
