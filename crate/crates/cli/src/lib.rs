//! Batch driver: TOML configs in, run directories out.

pub mod config;
pub mod run;

pub use config::{parse_config, Command, ConfigError, RunConfig};
pub use run::{run, Outcome, RunError};
