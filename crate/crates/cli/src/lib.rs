//! Configuration-driven experiment runner for `landau-core`.
//!
//! Every run writes CSV outputs plus a `manifest.json` into its output
//! directory. See the repository README for the file formats.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;

pub use config::{
    BenchConfig, ConvergenceConfig, ExperimentConfig, ExperimentKind, GridConfig, HomogeneousConfig, SamplerTestConfig,
    VplSection,
};
pub use experiments::{
    bench_per_step, convergence_study, load_reference_density, run, sampler_test, ConvergenceResult, SamplerReport,
};
pub use output::RunManifest;

/// Environment variable consulted for the worker thread count when the
/// config does not set one.
pub const THREADS_ENV: &str = "LANDAU_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("cannot parse {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] landau_core::Error),

    #[error("cannot serialise manifest: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Thread count from the config, else from [`THREADS_ENV`].
pub fn thread_count(config_threads: Option<usize>) -> Result<Option<usize>> {
    if config_threads.is_some() {
        return Ok(config_threads);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| CliError::Config {
                field: THREADS_ENV.into(),
                message: format!("expected a positive integer, got `{v}`"),
            }),
        Err(_) => Ok(None),
    }
}
