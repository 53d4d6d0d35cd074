//! Experiment harness for `binmp-core`: config files, the five experiment
//! commands and their CSV outputs.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use commands::run;
pub use config::{DatasetKind, DatasetSpec, ExperimentConfig, ExperimentKind, ModelSpec, SweepGrid};
pub use error::{CliError, Result};

/// Caps the global worker pool at `BINMP_THREADS` when it is set.
pub fn init_thread_pool() -> Result<()> {
    let Ok(value) = std::env::var("BINMP_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| CliError::Config(format!("BINMP_THREADS must be a positive integer, got {value:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Config(e.to_string()))
}
