//! Experiment runner for quantized stationary policies.
//!
//! Each subcommand of the `quantpol` binary maps to one `run_*` function in
//! [`experiments`]; configs are parsed by [`config`] and reports rendered by
//! [`report`].

pub mod config;
pub mod experiments;
pub mod report;

pub use config::{parse_config, parse_config_str, ConfigError, ExperimentConfig};
pub use experiments::{run_bounds_check, run_convergence, run_ergodicity, run_slb, run_tvcheck, ExperimentError, RunOptions};
pub use report::{Metadata, OutputFormat, Report};
