//! Config-driven experiment runner for Schatten-p regularized optimal transport.
//!
//! One TOML config describes one experiment (see [`config`] for the schema);
//! each subcommand writes a single CSV into the configured output directory.

pub mod config;
pub mod run;

pub use config::{Command, ConfigError, ExperimentConfig, FieldError};
pub use run::{
    certify_rows, convergence_rows, gaussian_rows, run_certify, run_convergence, run_gaussian, run_sweep, sweep_rows,
    Provenance, RunError,
};

/// Sizes the global thread pool. Has no effect in sequential builds.
pub fn configure_threads(threads: usize) -> Result<(), String> {
    #[cfg(feature = "parallel")]
    {
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().map_err(|e| e.to_string())
    }
    #[cfg(not(feature = "parallel"))]
    {
        let _ = threads;
        Ok(())
    }
}
