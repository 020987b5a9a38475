//! Experiment harness for `sparse-gn`: the motivating two-parameter systems,
//! the synthetic weight-recovery table, and solver parameter sweeps.
//!
//! The `sparse-gn` binary is a thin wrapper over these functions.

pub mod config;
pub mod motivating;
pub mod output;
pub mod sweep;
pub mod table;

pub use config::{ExperimentConfig, ResolvedExperiment};
pub use motivating::{run_motivating, MotivatingReport};
pub use sweep::{run_sweep, SweepKind, SweepReport};
pub use table::{run_table_experiment, TableReport};

/// Environment variable capping the number of worker threads.
pub const THREADS_ENV: &str = "SPARSE_GN_THREADS";

/// Thread cap from [`THREADS_ENV`], if set to a positive integer.
pub fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(None),
        Ok(v) if v.trim().is_empty() => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => anyhow::bail!("{THREADS_ENV} must be a positive integer, got {v:?}"),
            Ok(n) => Ok(Some(n)),
        },
    }
}
