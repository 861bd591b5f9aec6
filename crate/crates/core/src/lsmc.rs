//! Backward induction with regression-estimated conditional expectations.
//!
//! Conditioning on `F_{t_i} = F^W_{t_i} ⊗ F^B_{t_i,T}` is realized by
//! freezing one `B`-path and regressing over the `W`-paths. For each frozen
//! `B`-path and node `i`, with `G_{i+1} = a(t_{i+1}, X_{i+1}) Y_{i+1} ΔB_i`:
//!
//! ```text
//! Ỹ_i = E[Y_{i+1} + G_{i+1} | X_i]
//! Z_i = E[(Y_{i+1} + G_{i+1} − Ỹ_i) ΔW_i | X_i] / Δ_i
//! Y_i = Ỹ_i + f(t_i, X_i, Ỹ_i, Z_i) Δ_i
//! ```
//!
//! Node `i` reads `ΔB_j` only for `j ≥ i`.

use rayon::prelude::*;

use crate::coefficients::{DriverSpec, ForwardSpec, NoiseLoadingSpec, Preset, TerminalFamily, TerminalForm};
use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::forward::{euler_forward, ForwardPaths};
use crate::regression::{RegressionBasis, RegressionPlan};
use crate::scalar::Scalar;
use crate::stats::{self, Estimate};

/// One equation: driver, loading, terminal family at parameter `x`, and an
/// optional forward leg started from `x` at node `t_index`.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    pub driver: DriverSpec<T>,
    pub loading: NoiseLoadingSpec<T>,
    pub terminal: TerminalFamily<T>,
    pub forward: Option<ForwardSpec<T>>,
    pub x: T,
    pub t_index: usize,
}

impl<T: Scalar> Problem<T> {
    pub fn new(driver: DriverSpec<T>, loading: NoiseLoadingSpec<T>, terminal: TerminalFamily<T>, x: T) -> Self {
        Self {
            driver,
            loading,
            terminal,
            forward: None,
            x,
            t_index: 0,
        }
    }

    pub fn from_preset(preset: &Preset<T>, x: T) -> Self {
        Self {
            driver: preset.driver.clone(),
            loading: preset.loading.clone(),
            terminal: preset.terminal.clone(),
            forward: preset.forward.clone(),
            x,
            t_index: 0,
        }
    }

    pub fn with_forward(mut self, fwd: ForwardSpec<T>) -> Self {
        self.forward = Some(fwd);
        self
    }

    pub fn with_driver(mut self, driver: DriverSpec<T>) -> Self {
        self.driver = driver;
        self
    }

    pub fn with_terminal(mut self, terminal: TerminalFamily<T>) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn at(mut self, x: T) -> Self {
        self.x = x;
        self
    }

    pub fn starting_at(mut self, t_index: usize) -> Self {
        self.t_index = t_index;
        self
    }

    /// No forward leg and a deterministic terminal: every quantity is a
    /// function of the frozen `B`-path alone.
    pub fn is_w_degenerate(&self) -> bool {
        self.forward.is_none() && self.terminal.is_deterministic()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig<T> {
    pub basis: RegressionBasis<T>,
    /// Keep per-`W`-path values of `Y` and `Z`.
    pub store_paths: bool,
    /// Declared `C_f`; when set, `Δ C_f ≥ 1` produces a stability warning.
    pub lipschitz: Option<T>,
}

impl<T: Scalar> Default for SchemeConfig<T> {
    fn default() -> Self {
        Self {
            basis: RegressionBasis::default(),
            store_paths: false,
            lipschitz: None,
        }
    }
}

impl<T: Scalar> SchemeConfig<T> {
    pub fn storing_paths(mut self) -> Self {
        self.store_paths = true;
        self
    }

    pub fn with_lipschitz(mut self, c: T) -> Self {
        self.lipschitz = Some(c);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMode {
    /// Per-`B`-path regression over `W`-paths.
    Regression,
    /// Scalar recursion per `B`-path; stored with a single `W`-column.
    Degenerate,
}

/// Per-`B`-path output of one backward sweep. Node vectors cover
/// `t_index..=N`; `Z` vectors cover `t_index..N`.
#[derive(Debug, Clone, PartialEq)]
struct Sweep<T> {
    y_mean: Vec<T>,
    y_se: Vec<T>,
    z_mean: Vec<T>,
    z_se: Vec<T>,
    y_paths: Vec<T>,
    z_paths: Vec<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackwardSolution<T> {
    pub mode: SolveMode,
    pub t_index: usize,
    pub step_count: usize,
    pub b_count: usize,
    /// `W`-paths behind each stored column: `M_W`, or 1 in degenerate mode.
    pub w_count: usize,
    /// Regression degree used at each node `t_index..N`.
    pub degrees: Vec<usize>,
    pub warnings: Vec<String>,
    /// Terminal values per `W`-path.
    pub terminal: Vec<T>,
    sweeps: Vec<Sweep<T>>,
    stored: bool,
}

impl<T: Scalar> BackwardSolution<T> {
    fn slot(&self, node: usize) -> usize {
        assert!(
            node >= self.t_index && node <= self.step_count,
            "node {node} outside {}..={}",
            self.t_index,
            self.step_count
        );
        node - self.t_index
    }

    /// Mean of `Y` at `node` over `W`-paths for `B`-path `b`, with the
    /// pathwise standard error.
    pub fn y_estimate(&self, b: usize, node: usize) -> Estimate<T> {
        let k = self.slot(node);
        Estimate {
            mean: self.sweeps[b].y_mean[k],
            se: self.sweeps[b].y_se[k],
        }
    }

    pub fn y_per_b(&self, node: usize) -> Vec<Estimate<T>> {
        (0..self.b_count).map(|b| self.y_estimate(b, node)).collect()
    }

    pub fn pooled_y(&self, node: usize) -> Estimate<T> {
        Estimate::pooled(&self.y_per_b(node))
    }

    pub fn z_estimate(&self, b: usize, node: usize) -> Estimate<T> {
        let k = self.slot(node);
        assert!(node < self.step_count, "Z lives on nodes < N");
        Estimate {
            mean: self.sweeps[b].z_mean[k],
            se: self.sweeps[b].z_se[k],
        }
    }

    pub fn pooled_z(&self, node: usize) -> Estimate<T> {
        let per_b: Vec<Estimate<T>> = (0..self.b_count).map(|b| self.z_estimate(b, node)).collect();
        Estimate::pooled(&per_b)
    }

    /// Per-`W`-path values of `Y` at `node` for `B`-path `b`, when stored.
    pub fn y_values(&self, b: usize, node: usize) -> Option<&[T]> {
        if !self.stored {
            return None;
        }
        let k = self.slot(node);
        Some(&self.sweeps[b].y_paths[k * self.w_count..(k + 1) * self.w_count])
    }

    pub fn z_values(&self, b: usize, node: usize) -> Option<&[T]> {
        if !self.stored || node >= self.step_count {
            return None;
        }
        let k = self.slot(node);
        Some(&self.sweeps[b].z_paths[k * self.w_count..(k + 1) * self.w_count])
    }

    pub fn has_paths(&self) -> bool {
        self.stored
    }

    /// Mean over all `(B, W)` paths of `sup_i φ(Y_i, Y'_i)` over nodes
    /// `t_index..=N`, with its standard error over `B`-paths.
    pub fn pathwise_sup(&self, other: Option<&Self>, phi: impl Fn(T, T) -> T + Sync) -> Result<Estimate<T>> {
        if !self.stored {
            return Err(LabError::Invalid("pathwise statistics need stored paths".into()));
        }
        if let Some(o) = other {
            if !o.stored || o.w_count != self.w_count || o.b_count != self.b_count || o.t_index != self.t_index {
                return Err(LabError::Invalid("solutions are not on matching stored paths".into()));
            }
        }
        let nodes = self.step_count - self.t_index + 1;
        let m = self.w_count;
        let per_b: Vec<T> = (0..self.b_count)
            .into_par_iter()
            .map(|b| {
                let ya = &self.sweeps[b].y_paths;
                let yb = other.map(|o| &o.sweeps[b].y_paths);
                let sups: Vec<T> = (0..m)
                    .map(|w| {
                        (0..nodes).fold(T::neg_infinity(), |s, k| {
                            let other_v = yb.map_or(T::zero(), |v| v[k * m + w]);
                            s.max(phi(ya[k * m + w], other_v))
                        })
                    })
                    .collect();
                stats::mean(&sups)
            })
            .collect();
        Ok(Estimate::of(&per_b))
    }
}

enum StateSource<'a, T> {
    Forward(&'a ForwardPaths<T>),
    /// `W_{t_i}` node-major.
    Brownian(Vec<T>),
}

impl<T: Scalar> StateSource<'_, T> {
    fn node(&self, i: usize, m: usize) -> &[T] {
        match self {
            StateSource::Forward(f) => f.node(i),
            StateSource::Brownian(v) => &v[i * m..(i + 1) * m],
        }
    }
}

fn brownian_nodes<T: Scalar>(paths: &DriverPaths<T>) -> Vec<T> {
    let n = paths.step_count();
    let m = paths.w_count();
    let mut out = vec![T::zero(); m * (n + 1)];
    for w in 0..m {
        let dw = paths.dw(w);
        for i in 0..n {
            out[(i + 1) * m + w] = out[i * m + w] + dw[i];
        }
    }
    out
}

/// Solves one equation on shared driver paths, independently per `B`-path.
pub fn solve_bdsde_lsmc<T: Scalar>(
    paths: &DriverPaths<T>,
    problem: &Problem<T>,
    scheme: &SchemeConfig<T>,
) -> Result<BackwardSolution<T>> {
    scheme.basis.validate()?;
    let n = paths.step_count();
    let t0 = problem.t_index;
    if t0 > n {
        return Err(LabError::IndexOutOfRange { index: t0, limit: n });
    }
    if matches!(problem.terminal.form, TerminalForm::Forward(_)) && problem.forward.is_none() {
        return Err(LabError::Config(format!(
            "terminal family {} needs a forward leg",
            problem.terminal.name
        )));
    }
    let grid = paths.grid();
    let mut warnings = Vec::new();
    if let Some(c) = scheme.lipschitz {
        let worst = grid.steps().fold(T::zero(), |a, d| a.max(d));
        if worst * c >= T::one() {
            warnings.push(format!(
                "step {worst} times C_f = {c} is ≥ 1; the explicit scheme may be unstable"
            ));
        }
    }
    if problem.is_w_degenerate() {
        solve_degenerate(paths, problem, warnings)
    } else {
        solve_regression(paths, problem, scheme, warnings)
    }
}

fn solve_degenerate<T: Scalar>(
    paths: &DriverPaths<T>,
    problem: &Problem<T>,
    warnings: Vec<String>,
) -> Result<BackwardSolution<T>> {
    let n = paths.step_count();
    let t0 = problem.t_index;
    let grid = paths.grid();
    let zero = T::zero();
    let xi = problem.terminal.eval(problem.x, zero, zero, None);
    if !xi.is_finite() {
        return Err(LabError::NonFiniteTerminal { w_path: 0 });
    }
    let loading: Vec<T> = grid.nodes().iter().map(|&t| problem.loading.eval(t, zero)).collect();
    let sweeps: Result<Vec<Sweep<T>>> = (0..paths.b_count())
        .into_par_iter()
        .map(|b| {
            let db = paths.db(b);
            let len = n - t0 + 1;
            let mut y = vec![zero; len];
            y[len - 1] = xi;
            for i in (t0..n).rev() {
                let next = y[i + 1 - t0];
                let tilde = next + loading[i + 1] * next * db[i];
                let v = tilde + problem.driver.eval(grid.time(i), zero, tilde, zero) * grid.dt(i);
                if !v.is_finite() {
                    return Err(LabError::NonFinite {
                        b_path: b,
                        w_path: 0,
                        node: i,
                    });
                }
                y[i - t0] = v;
            }
            Ok(Sweep {
                y_se: vec![zero; len],
                z_mean: vec![zero; len - 1],
                z_se: vec![zero; len - 1],
                z_paths: vec![zero; len - 1],
                y_paths: y.clone(),
                y_mean: y,
            })
        })
        .collect();
    Ok(BackwardSolution {
        mode: SolveMode::Degenerate,
        t_index: t0,
        step_count: n,
        b_count: paths.b_count(),
        w_count: 1,
        degrees: vec![0; n - t0 + 1],
        warnings,
        terminal: vec![xi],
        sweeps: sweeps?,
        stored: true,
    })
}

fn solve_regression<T: Scalar>(
    paths: &DriverPaths<T>,
    problem: &Problem<T>,
    scheme: &SchemeConfig<T>,
    warnings: Vec<String>,
) -> Result<BackwardSolution<T>> {
    let n = paths.step_count();
    let m = paths.w_count();
    let t0 = problem.t_index;
    let grid = paths.grid();
    let zero = T::zero();

    let fwd_paths = match &problem.forward {
        Some(f) => Some(euler_forward(paths, f, t0, problem.x)?),
        None => None,
    };
    let w_nodes = brownian_nodes(paths);
    let states = match &fwd_paths {
        Some(f) => StateSource::Forward(f),
        None => StateSource::Brownian(w_nodes.clone()),
    };
    let w_terminal = &w_nodes[n * m..];
    let x_terminal: Vec<T> = match &fwd_paths {
        Some(f) => f.terminal().to_vec(),
        None => vec![problem.x; m],
    };
    let terminal: Vec<T> = (0..m)
        .map(|w| {
            problem
                .terminal
                .eval(problem.x, w_terminal[w], x_terminal[w], problem.forward.as_ref())
        })
        .collect();
    if let Some(w) = terminal.iter().position(|v| !v.is_finite()) {
        return Err(LabError::NonFiniteTerminal { w_path: w });
    }

    // Plans depend on the states only, so every B-path shares them.
    let plans: Vec<RegressionPlan<T>> = (t0..n)
        .into_par_iter()
        .map(|i| RegressionPlan::new(states.node(i, m), &scheme.basis))
        .collect::<Result<_>>()?;
    let mut degrees: Vec<usize> = plans.iter().map(|p| p.degree()).collect();
    degrees.push(0);

    // a(t_{i+1}, X_{i+1}) for each step, node-major.
    let loading: Vec<T> = (t0..n)
        .flat_map(|i| {
            let t = grid.time(i + 1);
            let xs = fwd_paths.as_ref().map(|f| f.node(i + 1));
            (0..m).map(move |w| xs.map_or(zero, |x| x[w])).map(move |x| (t, x))
        })
        .map(|(t, x)| problem.loading.eval(t, x))
        .collect();
    let dw_cols: Vec<Vec<T>> = (t0..n).map(|i| paths.dw_column(i)).collect();

    let store = scheme.store_paths;
    let sweeps: Result<Vec<Sweep<T>>> = (0..paths.b_count())
        .into_par_iter()
        .map(|b| {
            let db = paths.db(b);
            let len = n - t0 + 1;
            let mut y_mean = vec![zero; len];
            let mut y_se = vec![zero; len];
            let mut z_mean = vec![zero; len - 1];
            let mut z_se = vec![zero; len - 1];
            let mut y_paths = if store { vec![zero; len * m] } else { Vec::new() };
            let mut z_paths = if store { vec![zero; (len - 1) * m] } else { Vec::new() };

            let mut y_next = terminal.clone();
            let mut pathwise = terminal.clone();
            y_mean[len - 1] = stats::mean(&y_next);
            y_se[len - 1] = stats::std_error(&y_next);
            if store {
                y_paths[(len - 1) * m..].copy_from_slice(&y_next);
            }
            let mut target = vec![zero; m];
            let mut tilde = vec![zero; m];
            let mut z_target = vec![zero; m];
            let mut z = vec![zero; m];
            for i in (t0..n).rev() {
                let k = i - t0;
                let dt = grid.dt(i);
                let a = &loading[k * m..(k + 1) * m];
                for w in 0..m {
                    let g = a[w] * y_next[w] * db[i];
                    target[w] = y_next[w] + g;
                    pathwise[w] = pathwise[w] + g;
                }
                plans[k].fit_into(&target, &mut tilde)?;
                let dw = &dw_cols[k];
                for w in 0..m {
                    z_target[w] = (target[w] - tilde[w]) * dw[w] / dt;
                }
                plans[k].fit_into(&z_target, &mut z)?;
                let xs = states.node(i, m);
                let t = grid.time(i);
                for w in 0..m {
                    let x = if fwd_paths.is_some() { xs[w] } else { zero };
                    let f = problem.driver.eval(t, x, tilde[w], z[w]) * dt;
                    let v = tilde[w] + f;
                    if !v.is_finite() || !z[w].is_finite() {
                        return Err(LabError::NonFinite {
                            b_path: b,
                            w_path: w,
                            node: i,
                        });
                    }
                    y_next[w] = v;
                    pathwise[w] = pathwise[w] + f;
                }
                y_mean[k] = stats::mean(&y_next);
                y_se[k] = stats::std_error(&pathwise);
                z_mean[k] = stats::mean(&z);
                z_se[k] = stats::std_error(&z_target);
                if store {
                    y_paths[k * m..(k + 1) * m].copy_from_slice(&y_next);
                    z_paths[k * m..(k + 1) * m].copy_from_slice(&z);
                }
            }
            Ok(Sweep {
                y_mean,
                y_se,
                z_mean,
                z_se,
                y_paths,
                z_paths,
            })
        })
        .collect();
    Ok(BackwardSolution {
        mode: SolveMode::Regression,
        t_index: t0,
        step_count: n,
        b_count: paths.b_count(),
        w_count: m,
        degrees,
        warnings,
        terminal,
        sweeps: sweeps?,
        stored: store,
    })
}
