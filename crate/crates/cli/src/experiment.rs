//! Runs the checks requested by a config and writes the report files.
//!
//! Every CSV has a header row; floats are written as `{:.16e}` (17
//! significant digits). Schemas:
//!
//! | file | columns |
//! |---|---|
//! | `checks.csv` | `check,metric,value` |
//! | `audit.csv` | `assumption,worst,declared,non_finite,pass` |
//! | `q_bounds.csv` | `b_path,mean,se,inside` |
//! | `linear_oracle.csv` | `b_path,lsmc_mean,lsmc_se,explicit_mean,explicit_se,agree` |
//! | `comparison.csv` | `b_path,difference,se` |
//! | `sandwich.csv` | `b_path,lower_mean,lower_se,middle_mean,middle_se,upper_mean,upper_se` |
//! | `envelope.csv` | `x,side,fraction,sign_matched_fraction` |
//! | `monotonicity.csv` | `t_index,x,mean,se` |
//! | `holder.csv` | `distance,mean,se` |
//! | `negative_moment.csv` | `x,mean,se` |
//! | `forward_moment.csv` | `x,mean,se,ratio_mean,ratio_se` |
//! | `field.csv` | `t_index,t,x,mean,se` |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bdsde_lab::coefficients::{audit_assumptions, lookup_preset, Monotonicity, TerminalFamily};
use bdsde_lab::drivers::sample_driver_paths;
use bdsde_lab::grid::make_grid;
use bdsde_lab::linear::{explicit_linear_solution, q_conditional_bounds_check, EnvelopeSide, LinearTerminal};
use bdsde_lab::lsmc::solve_bdsde_lsmc;
use bdsde_lab::regression::RegressionBasis;
use bdsde_lab::stats::Estimate;
use bdsde_lab::verify::{
    comparison_check, field_monotonicity, forward_moment_check, holder_moment_estimate, inverse_probe,
    monotonicity_scan, negative_moment_decay, sandwich_check, Provenance, Thresholds,
};
use bdsde_lab::{
    AssumptionCard, DriverPaths, DriverSpec, ForwardSpec, LabError, LinearBdsdeSpec, NoiseLoadingSpec, Preset, Problem,
    RngSpec, SchemeConfig,
};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{apply_card, Check, ExperimentConfig};

/// Floats in every CSV: 17 significant digits, round-trip exact.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Lab(#[from] LabError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    /// Hypotheses of the check do not hold for this problem; only under `verify`.
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    pub status: Status,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub config_echo: String,
    /// SHA-256 of the config echo without its `[output]` section.
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
    pub wall_clock_secs: f64,
    pub warnings: Vec<String>,
    pub checks: Vec<CheckSummary>,
    pub all_pass: bool,
    /// Set when a solver abort cut the run short.
    pub aborted: Option<String>,
}

impl RunManifest {
    pub fn exit_code(&self) -> i32 {
        if self.all_pass {
            0
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Requested checks must apply; a hypothesis mismatch fails the check.
    Run,
    /// Inapplicable checks are skipped.
    Verify,
}

pub fn config_hash(config: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(config.replay_text().as_bytes()))
}

/// Problem, preset (with inline overrides folded in) and card described by `config`.
pub fn build_problem(config: &ExperimentConfig) -> Result<(Preset, Problem, AssumptionCard), LabError> {
    let mut preset: Preset =
        lookup_preset(&config.preset).ok_or_else(|| LabError::Config(format!("unknown preset {:?}", config.preset)))?;
    if config.lambda.is_some() || config.mu.is_some() {
        preset.driver = DriverSpec::linear(config.lambda.unwrap_or(0.0), config.mu.unwrap_or(0.0));
    }
    if let Some(a) = config.loading {
        preset.loading = NoiseLoadingSpec::constant(a);
    }
    if let (Some(mu), Some(sigma)) = (config.fwd_mu, config.fwd_sigma) {
        preset.forward = Some(ForwardSpec::geometric(mu, sigma));
    }
    if let Some(t) = &config.terminal {
        preset.terminal = match t.as_str() {
            "identity" => TerminalFamily::identity(),
            "cubic" => TerminalFamily::cubic(),
            "constant" => TerminalFamily::constant(0.0),
            "brownian_shift" => TerminalFamily::brownian_shift(),
            "forward" => TerminalFamily::forward(Monotonicity::Increasing).with_growth(|x| x),
            other => return Err(LabError::Config(format!("unknown terminal family {other:?}"))),
        };
    }
    if config.shift != 0.0 {
        preset.terminal = preset.terminal.shifted(config.shift);
    }
    let card = apply_card(&preset.card, &config.card);
    card.validate()?;
    let problem = Problem::from_preset(&preset, config.x).starting_at(config.t_index);
    Ok((preset, problem, card))
}

pub fn build_scheme(config: &ExperimentConfig, card: &AssumptionCard) -> Result<SchemeConfig, LabError> {
    Ok(SchemeConfig {
        basis: RegressionBasis::new(config.degree, config.trunc_lo, config.trunc_hi)?,
        store_paths: false,
        lipschitz: Some(card.driver_lipschitz),
    })
}

pub fn build_paths(config: &ExperimentConfig) -> Result<DriverPaths, LabError> {
    let grid = make_grid(config.horizon, config.steps)?;
    sample_driver_paths(&grid, config.w_count, config.b_count, RngSpec::new(config.seed))
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

struct Csv {
    name: &'static str,
    text: String,
}

impl Csv {
    fn new(name: &'static str, header: &str) -> Self {
        Self {
            name,
            text: format!("{header}\n"),
        }
    }

    fn row(&mut self, cells: &[String]) {
        self.text.push_str(&cells.join(","));
        self.text.push('\n');
    }
}

struct Outcome {
    pass: bool,
    metrics: BTreeMap<String, f64>,
    csvs: Vec<Csv>,
}

impl Outcome {
    fn new(pass: bool) -> Self {
        Self {
            pass,
            metrics: BTreeMap::new(),
            csvs: Vec::new(),
        }
    }

    fn metric(mut self, k: &str, v: f64) -> Self {
        self.metrics.insert(k.to_string(), v);
        self
    }

    fn csv(mut self, c: Csv) -> Self {
        self.csvs.push(c);
        self
    }
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    preset: Preset,
    problem: Problem,
    card: AssumptionCard,
    scheme: SchemeConfig,
    paths: DriverPaths,
    thresholds: Thresholds,
}

fn b(v: bool) -> String {
    (v as u8).to_string()
}

fn run_check(ctx: &Ctx, check: Check) -> Result<Outcome, LabError> {
    let c = ctx.config;
    let n = c.steps;
    let t = c.t_index;
    match check {
        Check::Audit => {
            let rep = audit_assumptions(&ctx.preset, &ctx.card, c.probes, RngSpec::new(c.seed), c.horizon)?;
            let mut csv = Csv::new("audit.csv", "assumption,worst,declared,non_finite,pass");
            for e in &rep.entries {
                csv.row(&[
                    e.assumption.label().to_string(),
                    fmt_f64(e.worst),
                    fmt_f64(e.declared),
                    e.non_finite.to_string(),
                    b(e.pass),
                ]);
            }
            Ok(Outcome::new(rep.pass())
                .metric("audited", rep.entries.len() as f64)
                .metric("failures", rep.failures().len() as f64)
                .csv(csv))
        }
        Check::QBounds => {
            let spec = LinearBdsdeSpec::constant(n + 1, c.q_drift, c.q_z, c.q_noise);
            let (cf, cg) = (ctx.card.driver_lipschitz, ctx.card.noise_lipschitz);
            let rep = q_conditional_bounds_check(&spec, &ctx.paths, t, n, cf, cg)?;
            let mut csv = Csv::new("q_bounds.csv", "b_path,mean,se,inside");
            for (i, (e, inside)) in rep.per_b.iter().zip(&rep.inside).enumerate() {
                csv.row(&[i.to_string(), fmt_f64(e.mean), fmt_f64(e.se), b(*inside)]);
            }
            let expected = (c.q_drift * (c.horizon - ctx.paths.grid().time(t))).exp();
            let pooled_ok = (rep.pooled.mean - expected).abs() <= c.sigmas * rep.pooled.se;
            Ok(Outcome::new(rep.pass_fraction >= c.pass_threshold && pooled_ok)
                .metric("pass_fraction", rep.pass_fraction)
                .metric("pooled_mean", rep.pooled.mean)
                .metric("pooled_se", rep.pooled.se)
                .metric("expected_mean", expected)
                .metric("lower", rep.lower)
                .metric("upper", rep.upper)
                .csv(csv))
        }
        Check::LinearOracle => {
            let p = &ctx.problem;
            let (lambda, mu) = p
                .driver
                .linear_coefficients()
                .ok_or_else(|| LabError::Hypothesis("linear oracle needs a linear driver".into()))?;
            let a = p
                .loading
                .constant_value()
                .ok_or_else(|| LabError::Hypothesis("linear oracle needs a constant loading".into()))?;
            if !p.is_w_degenerate() {
                return Err(LabError::Hypothesis(
                    "linear oracle needs a deterministic terminal and no forward leg".into(),
                ));
            }
            let xi = p.terminal.eval(p.x, 0.0, p.x, None);
            let spec = LinearBdsdeSpec::constant(n + 1, lambda, mu, a).with_terminal(LinearTerminal::Constant(xi));
            let exact = explicit_linear_solution(&spec, &ctx.paths, t)?;
            let sol = solve_bdsde_lsmc(&ctx.paths, p, &ctx.scheme)?;
            let lsmc = sol.y_per_b(t);
            let tol = |x: &Estimate<f64>, y: &Estimate<f64>| (c.sigmas * x.combined_se(y)).max(0.02);
            let mut csv = Csv::new(
                "linear_oracle.csv",
                "b_path,lsmc_mean,lsmc_se,explicit_mean,explicit_se,agree",
            );
            let mut agree = 0;
            for (i, (l, e)) in lsmc.iter().zip(&exact.per_b).enumerate() {
                let ok = (l.mean - e.mean).abs() <= tol(l, e);
                agree += ok as usize;
                csv.row(&[
                    i.to_string(),
                    fmt_f64(l.mean),
                    fmt_f64(l.se),
                    fmt_f64(e.mean),
                    fmt_f64(e.se),
                    b(ok),
                ]);
            }
            let frac = agree as f64 / lsmc.len() as f64;
            let pooled = sol.pooled_y(t);
            let gap = (pooled.mean - exact.pooled.mean).abs();
            let pooled_ok = gap <= tol(&pooled, &exact.pooled);
            Ok(Outcome::new(pooled_ok && frac >= c.linear_fraction)
                .metric("pooled_lsmc", pooled.mean)
                .metric("pooled_explicit", exact.pooled.mean)
                .metric("pooled_gap", gap)
                .metric("pooled_tolerance", tol(&pooled, &exact.pooled))
                .metric("agreement_fraction", frac)
                .csv(csv))
        }
        Check::Comparison => {
            let lower = &ctx.problem;
            let upper = lower.clone().with_terminal(lower.terminal.shifted(c.comparison_shift));
            let rep = comparison_check(&upper, lower, &ctx.paths, &ctx.card, &ctx.scheme, t, &ctx.thresholds)?;
            let mut csv = Csv::new("comparison.csv", "b_path,difference,se");
            for (i, d) in rep.differences.iter().enumerate() {
                csv.row(&[i.to_string(), fmt_f64(d.mean), fmt_f64(d.se)]);
            }
            Ok(Outcome::new(rep.pass)
                .metric("strict_fraction", rep.strict_fraction)
                .metric("equal_fraction", rep.equal_fraction)
                .metric("epsilon", rep.epsilon)
                .metric("bound", rep.bound)
                .metric("margin", rep.margin)
                .csv(csv))
        }
        Check::Sandwich => {
            let rep = sandwich_check(
                &ctx.problem,
                &ctx.paths,
                &ctx.card,
                &ctx.scheme,
                t,
                None,
                &ctx.thresholds,
            )?;
            let mut csv = Csv::new(
                "sandwich.csv",
                "b_path,lower_mean,lower_se,middle_mean,middle_se,upper_mean,upper_se",
            );
            for i in 0..rep.lower.len() {
                let (l, m, u) = (rep.lower[i], rep.middle[i], rep.upper[i]);
                csv.row(&[
                    i.to_string(),
                    fmt_f64(l.mean),
                    fmt_f64(l.se),
                    fmt_f64(m.mean),
                    fmt_f64(m.se),
                    fmt_f64(u.mean),
                    fmt_f64(u.se),
                ]);
            }
            let mut env = Csv::new("envelope.csv", "x,side,fraction,sign_matched_fraction");
            for p in &rep.envelope {
                let side = match p.side {
                    EnvelopeSide::Upper => "upper",
                    EnvelopeSide::Lower => "lower",
                };
                env.row(&[
                    fmt_f64(p.x),
                    side.into(),
                    fmt_f64(p.fraction),
                    fmt_f64(p.sign_matched_fraction),
                ]);
            }
            Ok(Outcome::new(rep.pass)
                .metric("sandwich_fraction", rep.sandwich_fraction)
                .metric("threshold_m", rep.threshold_m)
                .metric("envelope_fraction_eps0", rep.envelope_fraction)
                .metric("upper_envelope_fraction", rep.upper_envelope_fraction)
                .metric("lower_envelope_fraction", rep.lower_envelope_fraction)
                .csv(csv)
                .csv(env))
        }
        Check::Monotonicity => {
            let xs = linspace(c.x_min, c.x_max, c.x_points);
            let scan = monotonicity_scan(&ctx.problem, &xs, &ctx.paths, &ctx.scheme, &[t], &ctx.thresholds)?;
            let mut csv = Csv::new("monotonicity.csv", "t_index,x,mean,se");
            for (e, x) in scan.pooled[0].iter().zip(&xs) {
                csv.row(&[t.to_string(), fmt_f64(*x), fmt_f64(e.mean), fmt_f64(e.se)]);
            }
            let ys = &scan.pooled[0];
            let target = 0.5 * (ys[0].mean + ys[ys.len() - 1].mean);
            let mut out = Outcome::new(scan.pass).metric("violation_fraction", scan.violation_fraction);
            match inverse_probe(&scan, target, t) {
                Ok(inv) => {
                    let ok = inv.residual <= 1e-3 * inv.scale;
                    out.pass &= ok;
                    out = out
                        .metric("inverse_target", target)
                        .metric("inverse_x", inv.x_hat)
                        .metric("inverse_residual", inv.residual)
                        .metric("inverse_scale", inv.scale);
                }
                Err(_) => {
                    out.pass = false;
                    out = out.metric("inverse_residual", f64::NAN);
                }
            }
            Ok(out.csv(csv))
        }
        Check::Holder => {
            let pairs: Vec<(f64, f64)> = (1..=c.holder_pairs)
                .map(|k| (c.x, c.x + 0.5f64.powi(k as i32)))
                .collect();
            let radius = c.x.abs() + 1.0;
            let rep = holder_moment_estimate(&ctx.problem, &pairs, radius, &ctx.paths, &ctx.scheme)?;
            let mut csv = Csv::new("holder.csv", "distance,mean,se");
            for p in &rep.points {
                csv.row(&[fmt_f64(p.abscissa), fmt_f64(p.estimate.mean), fmt_f64(p.estimate.se)]);
            }
            Ok(Outcome::new(rep.slope >= 1.0 && rep.r_squared >= 0.99)
                .metric("slope", rep.slope)
                .metric("r_squared", rep.r_squared)
                .csv(csv))
        }
        Check::NegativeMoment => {
            let beta = ctx
                .card
                .moment_exponent
                .ok_or_else(|| LabError::Hypothesis("negative moments need β in the card".into()))?;
            let xs = [2.0, 4.0, 8.0, 16.0];
            let rep = negative_moment_decay(&ctx.problem, &xs, beta, &ctx.card, &ctx.paths, &ctx.scheme, c.sigmas)?;
            let mut csv = Csv::new("negative_moment.csv", "x,mean,se");
            for p in &rep.points {
                csv.row(&[fmt_f64(p.abscissa), fmt_f64(p.estimate.mean), fmt_f64(p.estimate.se)]);
            }
            Ok(Outcome::new(rep.non_increasing == Some(true))
                .metric("slope", rep.slope)
                .metric("r_squared", rep.r_squared)
                .csv(csv))
        }
        Check::ForwardMoment => {
            let fwd = ctx
                .problem
                .forward
                .as_ref()
                .ok_or_else(|| LabError::Hypothesis("forward moments need a forward leg".into()))?;
            let beta = ctx
                .card
                .moment_exponent
                .ok_or_else(|| LabError::Hypothesis("forward moments need β in the card".into()))?;
            let xs = [2.0, 4.0, 8.0];
            let rep = forward_moment_check(fwd, beta, &xs, &ctx.card, &ctx.paths, t, n)?;
            let mut csv = Csv::new("forward_moment.csv", "x,mean,se,ratio_mean,ratio_se");
            for p in &rep.points {
                let r = p.ratio.unwrap_or(Estimate {
                    mean: f64::NAN,
                    se: f64::NAN,
                });
                csv.row(&[
                    fmt_f64(p.abscissa),
                    fmt_f64(p.estimate.mean),
                    fmt_f64(p.estimate.se),
                    fmt_f64(r.mean),
                    fmt_f64(r.se),
                ]);
            }
            let constant = rep.empirical_constant.unwrap_or(f64::NAN);
            Ok(Outcome::new(constant.is_finite())
                .metric("empirical_constant", constant)
                .metric("slope", rep.slope)
                .csv(csv))
        }
        Check::Field => {
            let xs = linspace(c.x_min, c.x_max, c.field_points);
            let mut rows = vec![t, n / 2];
            rows.sort_unstable();
            rows.dedup();
            let field = bdsde_lab::field::spde_field(&rows, &xs, &ctx.problem, &ctx.scheme, &ctx.paths)?;
            let rep = field_monotonicity(
                &field,
                ctx.problem.terminal.monotone,
                &ctx.thresholds,
                Provenance::of(&ctx.paths),
            );
            let mut csv = Csv::new("field.csv", "t_index,t,x,mean,se");
            for (r, &ti) in field.t_indices.iter().enumerate() {
                for (k, &x) in xs.iter().enumerate() {
                    let e = field.pooled[r][k];
                    csv.row(&[
                        ti.to_string(),
                        fmt_f64(field.times[r]),
                        fmt_f64(x),
                        fmt_f64(e.mean),
                        fmt_f64(e.se),
                    ]);
                }
            }
            Ok(Outcome::new(rep.pass)
                .metric("violation_fraction", rep.violation_fraction)
                .csv(csv))
        }
    }
}

fn is_abort(e: &LabError) -> bool {
    matches!(
        e,
        LabError::NonFinite { .. } | LabError::NonFiniteTerminal { .. } | LabError::Resource(_)
    )
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, text).map_err(|source| RunError::Io { path, source })
}

/// Runs every check of `config` (all of them under [`Mode::Verify`]) and
/// writes the CSVs and `manifest.json` into `out_dir`.
///
/// Output files depend only on the config echo, never on `threads`.
pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
    mode: Mode,
    threads: usize,
) -> Result<RunManifest, RunError> {
    let start = Instant::now();
    let mut config = config.clone();
    if mode == Mode::Verify {
        config.checks = Check::ALL.to_vec();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| RunError::Pool(e.to_string()))?;
    let (manifest, files) = pool.install(|| execute(&config, mode, threads))?;
    let mut manifest = manifest;
    manifest.wall_clock_secs = start.elapsed().as_secs_f64();

    fs::create_dir_all(out_dir).map_err(|source| RunError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let csv = config.formats.iter().any(|f| f == "csv");
    if csv {
        for (name, text) in &files {
            write(out_dir, name, text)?;
        }
    }
    if config.formats.iter().any(|f| f == "json") {
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write(out_dir, "manifest.json", &(json + "\n"))?;
    }
    Ok(manifest)
}

fn execute(
    config: &ExperimentConfig,
    mode: Mode,
    threads: usize,
) -> Result<(RunManifest, Vec<(String, String)>), RunError> {
    let (preset, problem, card) = build_problem(config)?;
    let scheme = build_scheme(config, &card)?;
    let paths = build_paths(config)?;
    let ctx = Ctx {
        config,
        preset,
        problem,
        card,
        scheme,
        paths,
        thresholds: Thresholds {
            pass_fraction: config.pass_threshold,
            sigmas: config.sigmas,
        },
    };
    let mut warnings = Vec::new();
    let (dt, cf) = (config.horizon / config.steps as f64, ctx.card.driver_lipschitz);
    if dt * cf >= 1.0 {
        warnings.push(format!(
            "step {dt} times C_f = {cf} is ≥ 1; the explicit scheme may be unstable"
        ));
    }
    let mut summaries = Vec::new();
    let mut files = Vec::new();
    let mut aborted = None;
    for &check in &config.checks {
        match run_check(&ctx, check) {
            Ok(out) => {
                let names = out.csvs.iter().map(|c| c.name.to_string()).collect();
                files.extend(out.csvs.into_iter().map(|c| (c.name.to_string(), c.text)));
                summaries.push(CheckSummary {
                    name: check.name(),
                    status: if out.pass { Status::Pass } else { Status::Fail },
                    metrics: out.metrics,
                    files: names,
                    error: None,
                });
            }
            Err(e) => {
                let skip = mode == Mode::Verify && matches!(e, LabError::Hypothesis(_) | LabError::Config(_));
                summaries.push(CheckSummary {
                    name: check.name(),
                    status: if skip { Status::Skipped } else { Status::Fail },
                    metrics: BTreeMap::new(),
                    files: Vec::new(),
                    error: Some(e.to_string()),
                });
                if is_abort(&e) {
                    aborted = Some(format!("{}: {e}", check.name()));
                    break;
                }
            }
        }
    }

    let mut table = String::from("check,metric,value\n");
    for s in &summaries {
        let _ = writeln!(table, "{},pass,{}", s.name, (s.status == Status::Pass) as u8);
        for (k, v) in &s.metrics {
            let _ = writeln!(table, "{},{},{}", s.name, k, fmt_f64(*v));
        }
    }
    files.push(("checks.csv".to_string(), table));

    let all_pass = aborted.is_none() && summaries.iter().all(|s| s.status != Status::Fail);
    let manifest = RunManifest {
        tool: "db-lab",
        version: env!("CARGO_PKG_VERSION"),
        config_echo: config.canonical(),
        config_hash: config_hash(config),
        seed: config.seed,
        threads,
        wall_clock_secs: 0.0,
        warnings,
        checks: summaries,
        all_pass,
        aborted,
    };
    Ok((manifest, files))
}
