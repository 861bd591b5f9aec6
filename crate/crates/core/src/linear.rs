//! Linear backward doubly SDEs
//!
//! ```text
//! Y_t = Y_T + (V_T − V_t) + ∫_t^T (a_s Y_s + b_s Z_s + f̂_s) ds + ∫_t^T c_s Y_s d←B_s − ∫_t^T Z_s dW_s
//! ```
//!
//! with deterministic coefficients have the explicit solution
//! `Y_t = E[Q^t_T Y_T | F_t] − ∫_t^T E[Q^t_s | F_t] dV_s + ∫_t^T E[Q^t_s f̂_s | F_t] ds`
//! where `Q^t_s = exp(∫b dW − ½∫b² ds + ∫c d←B − ½∫c² ds + ∫a ds)`.
//!
//! Conditioning on `F_t` freezes the `B`-path: every estimate below is an
//! average over `W`-paths for one fixed `B`-path.

use rayon::prelude::*;

use crate::coefficients::NoiseLoadingSpec;
use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::scalar::Scalar;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub enum LinearTerminal<T> {
    Constant(T),
    /// One terminal value per `W`-path.
    PerWPath(Vec<T>),
}

/// Per-node coefficients of a linear equation. All vectors have one entry
/// per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBdsdeSpec<T> {
    /// Coefficient of `y` in the drift.
    pub drift: Vec<T>,
    /// Coefficient of `z` in the drift.
    pub z_coeff: Vec<T>,
    /// Backward-noise coefficient.
    pub noise: Vec<T>,
    pub forcing: Vec<T>,
    /// Deterministic finite-variation path `V`.
    pub variation: Vec<T>,
    pub terminal: LinearTerminal<T>,
    /// Declared `(C_{f¹}, C_g)`: `|a|, |b| ≤ C_{f¹}` and `|c| ≤ C_g`.
    pub bounds: Option<(T, T)>,
}

impl<T: Scalar> LinearBdsdeSpec<T> {
    /// Constant coefficients, zero forcing and variation, terminal 1.
    pub fn constant(node_count: usize, drift: T, z_coeff: T, noise: T) -> Self {
        Self {
            drift: vec![drift; node_count],
            z_coeff: vec![z_coeff; node_count],
            noise: vec![noise; node_count],
            forcing: vec![T::zero(); node_count],
            variation: vec![T::zero(); node_count],
            terminal: LinearTerminal::Constant(T::one()),
            bounds: None,
        }
    }

    pub fn with_terminal(mut self, terminal: LinearTerminal<T>) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn with_bounds(mut self, driver_lipschitz: T, noise_lipschitz: T) -> Self {
        self.bounds = Some((driver_lipschitz, noise_lipschitz));
        self
    }

    /// Multiplies terminal, forcing and variation by `k`.
    pub fn scaled(&self, k: T) -> Self {
        let mut out = self.clone();
        out.forcing.iter_mut().for_each(|v| *v = *v * k);
        out.variation.iter_mut().for_each(|v| *v = *v * k);
        out.terminal = match &self.terminal {
            LinearTerminal::Constant(c) => LinearTerminal::Constant(*c * k),
            LinearTerminal::PerWPath(v) => LinearTerminal::PerWPath(v.iter().map(|&x| x * k).collect()),
        };
        out
    }

    /// Total positive variation of `V` on `[t_i, t_N]`, the increasing
    /// `β` dominating `d V⁺`.
    pub fn positive_variation(&self, from: usize) -> T {
        self.variation[from..]
            .windows(2)
            .fold(T::zero(), |acc, w| acc + (w[1] - w[0]).max(T::zero()))
    }

    fn validate(&self, paths: &DriverPaths<T>) -> Result<()> {
        let nodes = paths.step_count() + 1;
        for v in [&self.drift, &self.z_coeff, &self.noise, &self.forcing, &self.variation] {
            if v.len() != nodes {
                return Err(LabError::LengthMismatch {
                    expected: nodes,
                    got: v.len(),
                });
            }
        }
        if let LinearTerminal::PerWPath(v) = &self.terminal {
            if v.len() != paths.w_count() {
                return Err(LabError::LengthMismatch {
                    expected: paths.w_count(),
                    got: v.len(),
                });
            }
        }
        if let Some((cf, cg)) = self.bounds {
            for i in 0..nodes {
                if self.drift[i].abs() > cf || self.z_coeff[i].abs() > cf {
                    return Err(LabError::CoefficientBound(format!(
                        "|a| or |b| exceeds C_f1 = {cf} at node {i}"
                    )));
                }
                if self.noise[i].abs() > cg {
                    return Err(LabError::CoefficientBound(format!(
                        "|c| exceeds C_g = {cg} at node {i}"
                    )));
                }
            }
        }
        Ok(())
    }

    fn terminal_value(&self, w: usize) -> T {
        match &self.terminal {
            LinearTerminal::Constant(c) => *c,
            LinearTerminal::PerWPath(v) => v[w],
        }
    }
}

fn check_indices(t: usize, s: usize, n: usize) -> Result<()> {
    if s > n {
        return Err(LabError::IndexOutOfRange { index: s, limit: n });
    }
    if t > s {
        return Err(LabError::IndexOutOfRange { index: t, limit: s });
    }
    Ok(())
}

/// Cumulative exponents of `Q^t_·` split into the `W`, `B` and time parts.
struct QExponents<T> {
    /// `[w][k - t]` for `k = t..=N`.
    w: Vec<Vec<T>>,
    b: Vec<Vec<T>>,
    time: Vec<T>,
}

fn q_exponents<T: Scalar>(spec: &LinearBdsdeSpec<T>, paths: &DriverPaths<T>, t: usize, s: usize) -> QExponents<T> {
    let grid = paths.grid();
    let half = T::of(0.5);
    let w = (0..paths.w_count())
        .into_par_iter()
        .map(|m| {
            let dw = paths.dw(m);
            let mut acc = T::zero();
            let mut out = Vec::with_capacity(s - t + 1);
            out.push(acc);
            for k in t..s {
                let bk = spec.z_coeff[k];
                acc = acc + bk * dw[k] - half * bk * bk * grid.dt(k);
                out.push(acc);
            }
            out
        })
        .collect();
    let b = (0..paths.b_count())
        .into_par_iter()
        .map(|m| {
            let db = paths.db(m);
            let mut acc = T::zero();
            let mut out = Vec::with_capacity(s - t + 1);
            out.push(acc);
            for k in t..s {
                // backward sum reads the right endpoint, time sum the left
                let c_right = spec.noise[k + 1];
                let c_left = spec.noise[k];
                acc = acc + c_right * db[k] - half * c_left * c_left * grid.dt(k);
                out.push(acc);
            }
            out
        })
        .collect();
    let mut time = Vec::with_capacity(s - t + 1);
    let mut acc = T::zero();
    time.push(acc);
    for k in t..s {
        acc = acc + spec.drift[k] * grid.dt(k);
        time.push(acc);
    }
    QExponents { w, b, time }
}

/// Values of `Q^t_s` on every `(B-path, W-path)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QFactor<T> {
    pub t_index: usize,
    pub s_index: usize,
    pub w_count: usize,
    pub b_count: usize,
    /// Row-major `[b][w]`.
    pub values: Vec<T>,
}

impl<T: Scalar> QFactor<T> {
    pub fn get(&self, b: usize, w: usize) -> T {
        self.values[b * self.w_count + w]
    }

    pub fn row(&self, b: usize) -> &[T] {
        &self.values[b * self.w_count..(b + 1) * self.w_count]
    }
}

pub fn q_factor<T: Scalar>(
    spec: &LinearBdsdeSpec<T>,
    paths: &DriverPaths<T>,
    t_index: usize,
    s_index: usize,
) -> Result<QFactor<T>> {
    spec.validate(paths)?;
    check_indices(t_index, s_index, paths.step_count())?;
    let e = q_exponents(spec, paths, t_index, s_index);
    let last = s_index - t_index;
    let values =
        e.b.par_iter()
            .flat_map_iter(|eb| {
                let eb = eb[last];
                let et = e.time[last];
                e.w.iter().map(move |ew| (ew[last] + eb + et).exp())
            })
            .collect();
    Ok(QFactor {
        t_index,
        s_index,
        w_count: paths.w_count(),
        b_count: paths.b_count(),
        values,
    })
}

/// Per-`B`-path estimates of `E[Q^t_s | F_t]` against `e^{±(C_{f¹} + C_g)(s − t)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct QBoundsReport<T> {
    pub per_b: Vec<Estimate<T>>,
    pub lower: T,
    pub upper: T,
    pub inside: Vec<bool>,
    pub pass_fraction: f64,
    pub pooled: Estimate<T>,
}

pub fn q_conditional_bounds_check<T: Scalar>(
    spec: &LinearBdsdeSpec<T>,
    paths: &DriverPaths<T>,
    t_index: usize,
    s_index: usize,
    driver_lipschitz: T,
    noise_lipschitz: T,
) -> Result<QBoundsReport<T>> {
    let q = q_factor(spec, paths, t_index, s_index)?;
    let grid = paths.grid();
    let rate = (driver_lipschitz + noise_lipschitz) * (grid.time(s_index) - grid.time(t_index));
    let lower = (-rate).exp();
    let upper = rate.exp();
    let three = T::of(3.0);
    // absorbs rounding when a bound is attained exactly
    let ulp = T::epsilon() * T::of(64.0);
    let per_b: Vec<Estimate<T>> = (0..q.b_count).map(|b| Estimate::of(q.row(b))).collect();
    let inside: Vec<bool> = per_b
        .iter()
        .map(|e| e.mean >= lower * (T::one() - ulp) - three * e.se && e.mean <= upper * (T::one() + ulp) + three * e.se)
        .collect();
    let pass_fraction = inside.iter().filter(|&&v| v).count() as f64 / inside.len() as f64;
    let pooled = Estimate::pooled(&per_b);
    Ok(QBoundsReport {
        per_b,
        lower,
        upper,
        inside,
        pass_fraction,
        pooled,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitSolution<T> {
    pub t_index: usize,
    pub per_b: Vec<Estimate<T>>,
    pub pooled: Estimate<T>,
}

/// Evaluates the explicit solution at node `t_index` for every `B`-path.
pub fn explicit_linear_solution<T: Scalar>(
    spec: &LinearBdsdeSpec<T>,
    paths: &DriverPaths<T>,
    t_index: usize,
) -> Result<ExplicitSolution<T>> {
    spec.validate(paths)?;
    let n = paths.step_count();
    check_indices(t_index, n, n)?;
    for w in 0..paths.w_count() {
        if !spec.terminal_value(w).is_finite() {
            return Err(LabError::NonFiniteTerminal { w_path: w });
        }
    }
    let grid = paths.grid();
    let e = q_exponents(spec, paths, t_index, n);
    let last = n - t_index;
    let v_terminal = spec.variation[n];
    let has_path_terms =
        (t_index..n).any(|k| spec.forcing[k] != T::zero() || spec.variation[k + 1] != spec.variation[k]);
    let per_b: Vec<Estimate<T>> = e
        .b
        .par_iter()
        .map(|eb| {
            let samples: Vec<T> =
                e.w.iter()
                    .enumerate()
                    .map(|(w, ew)| {
                        let q = |k: usize| (ew[k - t_index] + eb[k - t_index] + e.time[k - t_index]).exp();
                        let mut y = (ew[last] + eb[last] + e.time[last]).exp() * (spec.terminal_value(w) + v_terminal);
                        if has_path_terms {
                            for k in t_index..n {
                                let qk = q(k);
                                y = y - qk * (spec.variation[k + 1] - spec.variation[k])
                                    + qk * spec.forcing[k] * grid.dt(k);
                            }
                        }
                        y
                    })
                    .collect();
            Estimate::of(&samples)
        })
        .collect();
    let pooled = Estimate::pooled(&per_b);
    Ok(ExplicitSolution { t_index, per_b, pooled })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeSide {
    /// `X^+` with exponent `+C_f (T − t)`.
    Upper,
    /// `X^-` with exponent `−C_f (T − t)`.
    Lower,
}

/// `X^±_t(x) = h(x) ε_0 exp(±C_f (T − t) + ∫_t^T a d←B − ½ ∫_t^T a² ds)` per `B`-path.
#[allow(clippy::too_many_arguments)]
pub fn bounding_envelope<T: Scalar>(
    x: T,
    side: EnvelopeSide,
    loading: &NoiseLoadingSpec<T>,
    driver_lipschitz: T,
    growth_floor: T,
    paths: &DriverPaths<T>,
    h: impl Fn(T) -> T,
    envelope_fraction: Option<T>,
    t_index: usize,
) -> Result<Vec<T>> {
    if !loading.is_spatially_constant() {
        return Err(LabError::Hypothesis(
            "envelope requires a spatially constant loading a(s)".into(),
        ));
    }
    let eps0 = envelope_fraction.unwrap_or(growth_floor / T::of(2.0));
    if !(eps0 > T::zero() && eps0 < growth_floor) {
        return Err(LabError::Config(format!(
            "envelope fraction must lie in (0, {growth_floor}), got {eps0}"
        )));
    }
    let n = paths.step_count();
    check_indices(t_index, n, n)?;
    let grid = paths.grid();
    let a: Vec<T> = grid.nodes().iter().map(|&t| loading.eval(t, T::zero())).collect();
    let a2: Vec<T> = a.iter().map(|&v| v * v).collect();
    let compensator = grid.time_quadrature(&a2, t_index, n)?;
    let sign = match side {
        EnvelopeSide::Upper => T::one(),
        EnvelopeSide::Lower => -T::one(),
    };
    let drift = sign * driver_lipschitz * (grid.horizon() - grid.time(t_index));
    let scale = h(x) * eps0;
    (0..paths.b_count())
        .map(|m| {
            let b = paths.b_path(m);
            let stoch = crate::drivers::backward_ito_sum(&b[t_index..], &a[t_index..])?;
            Ok(scale * (drift + stoch - T::of(0.5) * compensator).exp())
        })
        .collect()
}
