//! Randomized falsification of declared assumption constants.

use super::card::{Assumption, AssumptionCard};
use super::catalog::Preset;
use super::Monotonicity;
use crate::error::{LabError, Result};
use crate::rng::{Driver, RngSpec, Substream};
use crate::scalar::Scalar;

/// Probe box half-width for `x`, `y` and `z`.
const PROBE_RANGE: f64 = 10.0;
/// Half-width of local perturbations for difference quotients.
const LOCAL_STEP: f64 = 1e-3;
const REL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditEntry {
    pub assumption: Assumption,
    /// Worst observed value of the audited quantity (ratio, bound or count).
    pub worst: f64,
    /// Declared constant the worst value is compared with.
    pub declared: f64,
    pub pass: bool,
    pub non_finite: usize,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
}

impl AuditReport {
    pub fn pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, a: Assumption) -> Option<&AuditEntry> {
        self.entries.iter().find(|e| e.assumption == a)
    }

    pub fn failures(&self) -> Vec<&AuditEntry> {
        self.entries.iter().filter(|e| !e.pass).collect()
    }
}

struct Probe {
    stream: Substream,
}

impl Probe {
    fn new(rng: &RngSpec, a: Assumption) -> Self {
        let idx = Assumption::ALL.iter().position(|&b| b == a).unwrap_or(0);
        Self {
            stream: rng.substream(Driver::Probe, idx, 0),
        }
    }

    /// Two uniforms on `[-r, r]`.
    fn sym2(&mut self, r: f64) -> (f64, f64) {
        let (u, v) = self.stream.next_pair();
        (r * (2.0 * u - 1.0), r * (2.0 * v - 1.0))
    }

    fn unit2(&mut self) -> (f64, f64) {
        self.stream.next_pair()
    }
}

struct Tally {
    worst: f64,
    non_finite: usize,
}

impl Tally {
    fn max() -> Self {
        Self {
            worst: f64::NEG_INFINITY,
            non_finite: 0,
        }
    }

    fn min() -> Self {
        Self {
            worst: f64::INFINITY,
            non_finite: 0,
        }
    }

    fn push_max(&mut self, v: f64) {
        if v.is_finite() {
            self.worst = self.worst.max(v);
        } else {
            self.non_finite += 1;
        }
    }

    fn push_min(&mut self, v: f64) {
        if v.is_finite() {
            self.worst = self.worst.min(v);
        } else {
            self.non_finite += 1;
        }
    }
}

fn entry(a: Assumption, t: Tally, declared: f64, pass: bool, detail: String) -> AuditEntry {
    AuditEntry {
        assumption: a,
        worst: t.worst,
        declared,
        pass: pass && t.non_finite == 0,
        non_finite: t.non_finite,
        detail,
    }
}

/// Probes every claimed assumption of `preset` against `card`.
///
/// Passing never proves an assumption; a failure is a concrete counterexample.
pub fn audit_assumptions<T: Scalar>(
    preset: &Preset<T>,
    card: &AssumptionCard<T>,
    probe_count: usize,
    rng: RngSpec,
    horizon: T,
) -> Result<AuditReport> {
    if probe_count == 0 {
        return Err(LabError::Config("probe_count must be ≥ 1".into()));
    }
    card.validate()?;
    let horizon_f = horizon.as_f64();
    let f = |t: f64, x: f64, y: f64, z: f64| preset.driver.eval(T::of(t), T::of(x), T::of(y), T::of(z)).as_f64();
    let a = |t: f64, x: f64| preset.loading.eval(T::of(t), T::of(x)).as_f64();
    let mut report = AuditReport::default();

    for &claim in card.claims.iter() {
        let mut p = Probe::new(&rng, claim);
        let e = match claim {
            Assumption::LipschitzDriver => {
                let c = card.driver_lipschitz.as_f64();
                let mut tally = Tally::max();
                for k in 0..probe_count {
                    let (ut, _) = p.unit2();
                    let t = ut * horizon_f;
                    let (x, _) = p.sym2(PROBE_RANGE);
                    let (y, z) = p.sym2(PROBE_RANGE);
                    let (dy, dz) = if k % 2 == 0 {
                        p.sym2(LOCAL_STEP)
                    } else {
                        p.sym2(PROBE_RANGE)
                    };
                    let denom = dy.abs() + dz.abs();
                    if denom == 0.0 {
                        continue;
                    }
                    tally.push_max((f(t, x, y + dy, z + dz) - f(t, x, y, z)).abs() / denom);
                }
                let pass = tally.worst <= c * (1.0 + REL_SLACK);
                entry(claim, tally, c, pass, "max |Δf| / (|Δy| + |Δz|)".into())
            }
            Assumption::LipschitzNoise => {
                let c = card.noise_lipschitz.as_f64();
                let mut tally = Tally::max();
                for _ in 0..probe_count {
                    let (ut, _) = p.unit2();
                    let (x, _) = p.sym2(PROBE_RANGE);
                    let v = a(ut * horizon_f, x);
                    tally.push_max(v * v);
                }
                let pass = tally.worst <= c * (1.0 + REL_SLACK);
                entry(claim, tally, c, pass, "max |Δg|² / |Δy|² = a²".into())
            }
            Assumption::LinearNoise => {
                let half = card.noise_lipschitz.as_f64() / 2.0;
                let mut tally = Tally::max();
                for _ in 0..probe_count {
                    let (ut, _) = p.unit2();
                    let (x, _) = p.sym2(PROBE_RANGE);
                    tally.push_max(a(ut * horizon_f, x).abs());
                }
                let pass = tally.worst < half;
                entry(claim, tally, half, pass, "max |a| against C_g / 2 (strict)".into())
            }
            Assumption::BoundedDriverOrigin => {
                let c0 = card
                    .driver_origin_bound
                    .map(|v| v.as_f64())
                    .ok_or_else(|| LabError::Config("C_0 missing".into()))?;
                let mut tally = Tally::max();
                for _ in 0..probe_count {
                    let (ut, _) = p.unit2();
                    let (x, _) = p.sym2(PROBE_RANGE);
                    tally.push_max(horizon_f * f(ut * horizon_f, x, 0.0, 0.0).abs());
                }
                let pass = tally.worst <= c0 * (1.0 + REL_SLACK) + f64::EPSILON;
                entry(claim, tally, c0, pass, "T · max |f(t,x,0,0)|".into())
            }
            Assumption::Coercivity => {
                let c1 = card.coercivity.as_f64();
                let eps1 = card.coercivity_radius.as_f64();
                let mut tally = Tally::max();
                let mut zero_z_violations = 0usize;
                for _ in 0..probe_count {
                    let (ut, _) = p.unit2();
                    let (x, _) = p.sym2(PROBE_RANGE);
                    let (y, _) = p.sym2(eps1);
                    let (z, _) = p.sym2(PROBE_RANGE);
                    let yf = y * f(ut * horizon_f, x, y, z);
                    if z == 0.0 {
                        if yf < 0.0 {
                            zero_z_violations += 1;
                        }
                        continue;
                    }
                    tally.push_max(-yf / (z * z));
                }
                let pass = tally.worst <= c1 * (1.0 + REL_SLACK) && zero_z_violations == 0;
                entry(claim, tally, c1, pass, "max -y f / z² over |y| ≤ ε_1".into())
            }
            Assumption::ForwardGrowth => {
                let c1 = card.forward_growth.as_f64();
                let mut tally = Tally::max();
                match &preset.forward {
                    None => entry(claim, tally, c1, false, "no forward spec".into()),
                    Some(fw) => {
                        for _ in 0..probe_count {
                            let (x, _) = p.sym2(PROBE_RANGE);
                            if x == 0.0 {
                                continue;
                            }
                            let xt = T::of(x);
                            tally.push_max((fw.b(xt).abs() + fw.sigma(xt).abs()).as_f64() / x.abs());
                        }
                        let pass = tally.worst <= c1 * (1.0 + REL_SLACK);
                        entry(claim, tally, c1, pass, "max (|b| + |σ|) / |x|".into())
                    }
                }
            }
            Assumption::TerminalFloor => {
                let c2 = card.floor_constant.as_f64();
                let gamma = card.floor_exponent.as_f64();
                let mut tally = Tally::min();
                match &preset.forward {
                    None => entry(claim, tally, c2, false, "no forward spec".into()),
                    Some(fw) => {
                        for _ in 0..probe_count {
                            let (x, _) = p.sym2(PROBE_RANGE);
                            if x == 0.0 {
                                continue;
                            }
                            tally.push_min(fw.h(T::of(x)).abs().as_f64() / x.abs().powf(gamma));
                        }
                        let pass = tally.worst >= c2 * (1.0 - REL_SLACK);
                        entry(claim, tally, c2, pass, "min |h(x)| / |x|^γ".into())
                    }
                }
            }
            Assumption::MonotoneTerminal => {
                let mut tally = Tally::max();
                let dir = match preset.terminal.monotone {
                    Monotonicity::Increasing => 1.0,
                    Monotonicity::Decreasing => -1.0,
                    Monotonicity::Unspecified => 0.0,
                };
                let mut violations = 0usize;
                let per_curve = 64;
                let curves = probe_count.div_ceil(per_curve);
                for _ in 0..curves {
                    let (w, _) = p.sym2(3.0 * horizon_f.sqrt());
                    let mut xs: Vec<f64> = (0..per_curve).map(|_| p.sym2(PROBE_RANGE).0).collect();
                    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    xs.dedup();
                    let vals: Vec<f64> = xs
                        .iter()
                        .map(|&x| {
                            preset
                                .terminal
                                .eval(T::of(x), T::of(w), T::of(x), preset.forward.as_ref())
                                .as_f64()
                        })
                        .collect();
                    for v in vals.windows(2) {
                        if !(v[0].is_finite() && v[1].is_finite()) {
                            tally.non_finite += 1;
                        } else if !(dir * (v[1] - v[0]) > 0.0) {
                            violations += 1;
                        }
                    }
                }
                tally.worst = violations as f64;
                entry(
                    claim,
                    tally,
                    0.0,
                    violations == 0 && dir != 0.0,
                    "adjacent order violations on sorted probes".into(),
                )
            }
            Assumption::HolderTerminal => {
                let r = card.growth_radius.as_f64();
                let delta = card.holder_exponent.as_f64();
                let cr = card.holder_constant.as_f64();
                let mut tally = Tally::max();
                for _ in 0..probe_count {
                    let (x, y) = p.sym2(r);
                    let (w, _) = p.sym2(3.0 * horizon_f.sqrt());
                    if x == y {
                        continue;
                    }
                    let ev = |v: f64| {
                        preset
                            .terminal
                            .eval(T::of(v), T::of(w), T::of(v), preset.forward.as_ref())
                            .as_f64()
                    };
                    let d = ev(x) - ev(y);
                    tally.push_max(d * d / (x - y).abs().powf(1.0 + delta));
                }
                let pass = tally.worst <= cr * (1.0 + REL_SLACK);
                entry(claim, tally, cr, pass, "max |Δξ|² / |Δx|^(1+δ_R) on |x| ≤ R_0".into())
            }
            Assumption::TerminalGrowth => {
                let eps = card.growth_floor.as_f64();
                let r0 = card.growth_radius.as_f64();
                let mut tally = Tally::min();
                match &preset.terminal.growth {
                    None => entry(claim, tally, eps, false, "no growth function h declared".into()),
                    Some(h) => {
                        for _ in 0..probe_count {
                            let (u, s) = p.unit2();
                            let mag = r0 + u * (PROBE_RANGE * r0.max(1.0));
                            let x = if s < 0.5 { -mag } else { mag };
                            let (w, _) = p.sym2(3.0 * horizon_f.sqrt());
                            let xi = preset
                                .terminal
                                .eval(T::of(x), T::of(w), T::of(x), preset.forward.as_ref())
                                .as_f64();
                            tally.push_min(xi / h(T::of(x)).as_f64());
                        }
                        let pass = tally.worst > eps;
                        entry(claim, tally, eps, pass, "min ξ(x)/h(x) over |x| ≥ R_0".into())
                    }
                }
            }
            Assumption::NegativeMoment => {
                // Constraint on β is structural and checked by the card; the
                // liminf is checked on the far tail of deterministic samples.
                let beta = card.moment_exponent.map(|b| b.as_f64()).unwrap_or(0.0);
                let mut tally = Tally::max();
                let far = [1e2, 1e3, 1e4];
                for &x in &far {
                    for s in [-1.0, 1.0] {
                        let (w, _) = p.sym2(3.0 * horizon_f.sqrt());
                        let xi = preset
                            .terminal
                            .eval(T::of(s * x), T::of(w), T::of(s * x), preset.forward.as_ref())
                            .as_f64();
                        tally.push_max(xi.abs().powf(4.0 * beta));
                    }
                }
                let pass = beta < 0.0 && tally.worst < 1e-1;
                entry(claim, tally, 0.0, pass, "max |ξ(x)|^{4β} at |x| ≥ 100".into())
            }
        };
        report.entries.push(e);
    }
    Ok(report)
}
