//! Batch front end for `bdsde-lab`: config parsing, the experiment runner
//! and kernel benchmarks behind the `db-lab` binary.

pub mod bench;
pub mod config;
pub mod experiment;

pub use bench::{bench_kernel, BenchReport, KernelBench};
pub use config::{parse_config, Check, ConfigError, ExperimentConfig};
pub use experiment::{run_experiment, Mode, RunError, RunManifest, Status};

/// Environment fallback for `--threads`.
pub const THREADS_ENV: &str = "DB_LAB_THREADS";

/// `--threads`, else `DB_LAB_THREADS`, else every available core.
pub fn resolve_threads(flag: Option<usize>) -> Result<usize, String> {
    if let Some(n) = flag {
        return if n == 0 {
            Err("--threads must be ≥ 1".into())
        } else {
            Ok(n)
        };
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(format!("{THREADS_ENV} must be a positive integer, got {v:?}")),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}
