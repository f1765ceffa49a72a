//! Library side of the `vlp` command-line tool: experiment configuration,
//! result files and command implementations.

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{run, Cli};
pub use config::{ConfigError, ExperimentConfig};
