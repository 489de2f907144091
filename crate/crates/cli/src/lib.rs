//! Command-line experiments for the pension allocation model: a flat
//! `key = value` configuration, CSV outputs with a JSON manifest, and the
//! `strategies`, `simulate`, `verify` and `compare` commands.

pub mod config;
pub mod error;
pub mod experiments;
pub mod output;

pub use config::{Rival, RunConfig, VerifySettings};
pub use error::CliError;
pub use experiments::{run, Check, Command, RunOutcome, Status};
pub use output::RunManifest;

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "PENSION_DC_THREADS";
