//! Experiment harness around `apg-core`: JSON configs, seeded pipelines,
//! CSV logs, manifests, and the `run`, `verify` and `rate` commands.

pub mod commands;
pub mod config;
pub mod error;
pub mod experiment;
pub mod output;
pub mod presets;

pub use config::RunConfig;
pub use error::CliError;
pub use experiment::RunOutput;
