//! Throughput of path generation, the Q-factor and one LSMC sweep.

use std::time::Instant;

use bdsde_lab::linear::q_factor;
use bdsde_lab::lsmc::solve_bdsde_lsmc;
use bdsde_lab::{DriverPaths, LinearBdsdeSpec};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::experiment::{build_paths, build_problem, build_scheme, fmt_f64, RunError};

#[derive(Debug, Clone, Serialize)]
pub struct KernelBench {
    pub kernel: &'static str,
    pub reps: usize,
    pub median_secs: f64,
    /// Path-steps processed per repetition.
    pub work: f64,
    /// `work / median_secs`.
    pub throughput: f64,
    /// SHA-256 of the kernel output bits.
    pub checksum: String,
    /// Every timed repetition reproduced the untimed reference output.
    pub matches_reference: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub threads: usize,
    pub kernels: Vec<KernelBench>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("kernel,reps,median_secs,work,throughput,checksum,matches_reference\n");
        for k in &self.kernels {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                k.kernel,
                k.reps,
                fmt_f64(k.median_secs),
                fmt_f64(k.work),
                fmt_f64(k.throughput),
                k.checksum,
                k.matches_reference as u8
            ));
        }
        s
    }
}

fn checksum(values: impl IntoIterator<Item = f64>) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_bits().to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

fn time_kernel(
    kernel: &'static str,
    reps: usize,
    work: f64,
    mut run: impl FnMut() -> Result<String, RunError>,
) -> Result<KernelBench, RunError> {
    let reference = run()?;
    let mut times = Vec::with_capacity(reps);
    let mut matches = true;
    for _ in 0..reps {
        let t0 = Instant::now();
        let sum = run()?;
        times.push(t0.elapsed().as_secs_f64());
        matches &= sum == reference;
    }
    let median_secs = median(times);
    Ok(KernelBench {
        kernel,
        reps,
        median_secs,
        work,
        throughput: work / median_secs.max(f64::MIN_POSITIVE),
        checksum: reference,
        matches_reference: matches,
    })
}

pub fn generation_checksum(paths: &DriverPaths) -> String {
    checksum(paths.dw_matrix().iter().chain(paths.db_matrix()).copied())
}

/// Times each kernel `config.bench_reps` times inside a pool of `threads` workers.
pub fn bench_kernel(config: &ExperimentConfig, threads: usize) -> Result<BenchReport, RunError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    pool.install(|| {
        let reps = config.bench_reps.max(5);
        let (mw, mb, n) = (config.w_count as f64, config.b_count as f64, config.steps as f64);
        let generation = time_kernel("generation", reps, (mw + mb) * n, || {
            Ok(generation_checksum(&build_paths(config)?))
        })?;

        let paths = build_paths(config)?;
        let spec = LinearBdsdeSpec::constant(config.steps + 1, config.q_drift, config.q_z, config.q_noise);
        let q = time_kernel("q_factor", reps, mw * mb * n, || {
            let q = q_factor(&spec, &paths, 0, config.steps)?;
            Ok(checksum((0..q.b_count).flat_map(|b| q.row(b).to_vec())))
        })?;

        let (_, problem, card) = build_problem(config)?;
        let scheme = build_scheme(config, &card)?;
        let w_eff = if problem.is_w_degenerate() { 1.0 } else { mw };
        let sweep = time_kernel("lsmc_sweep", reps, w_eff * mb * n, || {
            let s = solve_bdsde_lsmc(&paths, &problem, &scheme)?;
            Ok(checksum(s.y_per_b(problem.t_index).iter().flat_map(|e| [e.mean, e.se])))
        })?;
        Ok(BenchReport {
            threads,
            kernels: vec![generation, q, sweep],
        })
    })
}
