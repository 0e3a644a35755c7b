//! Batch runner for the optimistic SDE learners: config parsing, seeded
//! sweeps, property suites and comparison tables.

pub mod commands;
pub mod config;

pub use commands::{cmd_catalog, cmd_compare, cmd_run, cmd_verify, CliError, Format, Options};
pub use config::{prepare, ConfigError, ExperimentConfig, Prepared};
