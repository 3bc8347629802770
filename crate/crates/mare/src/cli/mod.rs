//! Configuration loading, run orchestration and output emission.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{cmd_oracle, cmd_run, cmd_sweep, cmd_validity, error_json, initial_distribution};
pub use config::{load_config, parse_config, InitialDistribution, OutputSpec, RunSpec};

/// Environment variable overriding the worker-thread count.
pub const THREADS_ENV: &str = "MARE_THREADS";
