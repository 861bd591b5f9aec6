use super::{Provenance, Thresholds};
use crate::coefficients::Monotonicity;
use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::field::FieldReport;
use crate::lsmc::{solve_bdsde_lsmc, Problem, SchemeConfig};
use crate::scalar::Scalar;
use crate::stats::Estimate;

/// Observed range of the pooled curve over a symmetric sub-grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeRow<T> {
    pub t_index: usize,
    /// Half-width of the sub-grid around its center.
    pub half_width: T,
    pub min: T,
    pub max: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HomeoReport<T> {
    pub xs: Vec<T>,
    pub t_indices: Vec<usize>,
    pub direction: Monotonicity,
    /// Adjacent-pair order violations, `[t-row][B-path]`.
    pub violations: Vec<Vec<usize>>,
    pub pairs_per_row: usize,
    pub violation_fraction: f64,
    /// Pooled curve `x ↦ Ȳ^x_t`, `[t-row][x]`.
    pub pooled: Vec<Vec<Estimate<T>>>,
    /// Range over nested sub-grids; a proxy for surjectivity, not a proof.
    pub range_growth: Vec<RangeRow<T>>,
    pub threshold: f64,
    pub pass: bool,
    pub provenance: Provenance,
}

impl<T: Scalar> HomeoReport<T> {
    pub fn row_of(&self, t_index: usize) -> Option<usize> {
        self.t_indices.iter().position(|&t| t == t_index)
    }

    pub fn total_violations(&self) -> usize {
        self.violations.iter().flatten().sum()
    }
}

fn ordered<T: Scalar>(a: T, b: T, dir: Monotonicity) -> bool {
    match dir {
        Monotonicity::Decreasing => b < a,
        _ => b > a,
    }
}

/// Builds the report from per-`B`-path values `[t-row][x][B-path]`.
fn assemble<T: Scalar>(
    xs: &[T],
    t_indices: &[usize],
    per_b: &[Vec<Vec<Estimate<T>>>],
    pooled: Vec<Vec<Estimate<T>>>,
    direction: Monotonicity,
    thresholds: &Thresholds,
    provenance: Provenance,
) -> HomeoReport<T> {
    let pairs = xs.len().saturating_sub(1);
    let violations: Vec<Vec<usize>> = per_b
        .iter()
        .map(|row| {
            let b_count = row.first().map_or(0, |v| v.len());
            (0..b_count)
                .map(|b| {
                    row.windows(2)
                        .filter(|w| !ordered(w[0][b].mean, w[1][b].mean, direction))
                        .count()
                })
                .collect()
        })
        .collect();
    let total: usize = violations.iter().map(|r| r.len() * pairs).sum();
    let bad: usize = violations.iter().flatten().sum();
    let violation_fraction = if total == 0 { 0.0 } else { bad as f64 / total as f64 };

    let mut range_growth = Vec::new();
    let n = xs.len();
    if n > 0 {
        let center = (n - 1) / 2;
        for (row, &ti) in pooled.iter().zip(t_indices) {
            let mut reach = 1usize;
            loop {
                let lo = center.saturating_sub(reach);
                let hi = (center + reach).min(n - 1);
                let vals = row[lo..=hi].iter().map(|e| e.mean);
                let (min, max) = vals.fold((T::infinity(), T::neg_infinity()), |(a, b), v| (a.min(v), b.max(v)));
                range_growth.push(RangeRow {
                    t_index: ti,
                    half_width: (xs[hi] - xs[lo]) / T::of(2.0),
                    min,
                    max,
                });
                if lo == 0 && hi == n - 1 {
                    break;
                }
                reach *= 2;
            }
        }
    }
    HomeoReport {
        xs: xs.to_vec(),
        t_indices: t_indices.to_vec(),
        direction,
        violations,
        pairs_per_row: pairs,
        violation_fraction,
        pooled,
        range_growth,
        threshold: thresholds.pass_fraction,
        pass: 1.0 - violation_fraction >= thresholds.pass_fraction,
        provenance,
    }
}

/// Solves `Y^x` for every `x` on shared paths and counts order violations
/// between neighbouring grid points per `B`-path and time node.
pub fn monotonicity_scan<T: Scalar>(
    problem: &Problem<T>,
    xs: &[T],
    paths: &DriverPaths<T>,
    scheme: &SchemeConfig<T>,
    t_indices: &[usize],
    thresholds: &Thresholds,
) -> Result<HomeoReport<T>> {
    let direction = problem.terminal.monotone;
    if direction == Monotonicity::Unspecified {
        return Err(LabError::Hypothesis(format!(
            "terminal family {} is not flagged monotone",
            problem.terminal.name
        )));
    }
    if xs.len() < 2 || xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(LabError::Config(
            "x grid must be strictly increasing with ≥ 2 points".into(),
        ));
    }
    let start = t_indices.iter().copied().min().unwrap_or(0);
    let sols: Vec<_> = xs
        .iter()
        .map(|&x| solve_bdsde_lsmc(paths, &problem.clone().at(x).starting_at(start), scheme))
        .collect::<Result<_>>()?;
    let per_b: Vec<Vec<Vec<Estimate<T>>>> = t_indices
        .iter()
        .map(|&ti| sols.iter().map(|s| s.y_per_b(ti)).collect())
        .collect();
    let pooled = per_b
        .iter()
        .map(|row| row.iter().map(|v| Estimate::pooled(v)).collect())
        .collect();
    Ok(assemble(
        xs,
        t_indices,
        &per_b,
        pooled,
        direction,
        thresholds,
        Provenance::of(paths),
    ))
}

/// Order violations of `û(t, ·)` across the lattice, per `t`-row and `B`-path.
pub fn field_monotonicity<T: Scalar>(
    field: &FieldReport<T>,
    direction: Monotonicity,
    thresholds: &Thresholds,
    provenance: Provenance,
) -> HomeoReport<T> {
    let direction = match direction {
        Monotonicity::Unspecified => Monotonicity::Increasing,
        d => d,
    };
    assemble(
        &field.xs,
        &field.t_indices,
        &field.per_b,
        field.pooled.clone(),
        direction,
        thresholds,
        provenance,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InverseStatus {
    Found,
    /// Target attained at a grid endpoint.
    Edge,
    /// Target outside the scanned range: the grid is too narrow.
    OutOfRange,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseResult<T> {
    pub status: InverseStatus,
    pub x_hat: T,
    /// `|Ȳ^{x̂} − y|` on the interpolated pooled curve.
    pub residual: T,
    /// Observed range `max Ȳ − min Ȳ`.
    pub scale: T,
}

/// Bisection on the piecewise-linear interpolation of the pooled curve.
pub fn inverse_probe<T: Scalar>(scan: &HomeoReport<T>, target: T, t_index: usize) -> Result<InverseResult<T>> {
    let row = scan.row_of(t_index).ok_or(LabError::IndexOutOfRange {
        index: t_index,
        limit: 0,
    })?;
    let ys: Vec<T> = scan.pooled[row].iter().map(|e| e.mean).collect();
    let xs = &scan.xs;
    let inc = ys.windows(2).all(|w| w[1] > w[0]);
    let dec = ys.windows(2).all(|w| w[1] < w[0]);
    if !(inc || dec) {
        return Err(LabError::Hypothesis("pooled curve is not strictly monotone".into()));
    }
    let (lo_y, hi_y) = if inc {
        (ys[0], ys[ys.len() - 1])
    } else {
        (ys[ys.len() - 1], ys[0])
    };
    let scale = hi_y - lo_y;
    let tol = T::of(1e-3) * scale;
    let n = xs.len();
    for edge in [0, n - 1] {
        let r = (ys[edge] - target).abs();
        // at the edge itself, or just outside it within tolerance
        if r <= tol && (target <= lo_y || target >= hi_y || r == T::zero()) {
            return Ok(InverseResult {
                status: InverseStatus::Edge,
                x_hat: xs[edge],
                residual: r,
                scale,
            });
        }
    }
    if target < lo_y || target > hi_y {
        return Ok(InverseResult {
            status: InverseStatus::OutOfRange,
            x_hat: T::nan(),
            residual: T::infinity(),
            scale,
        });
    }
    let curve = |x: T| -> T {
        let k = xs.windows(2).position(|w| x <= w[1]).unwrap_or(n - 2);
        let w = (x - xs[k]) / (xs[k + 1] - xs[k]);
        ys[k] + w * (ys[k + 1] - ys[k])
    };
    let sign = if inc { T::one() } else { -T::one() };
    let (mut a, mut b) = (xs[0], xs[n - 1]);
    let mut x = (a + b) / T::of(2.0);
    for _ in 0..200 {
        x = (a + b) / T::of(2.0);
        let g = sign * (curve(x) - target);
        if g == T::zero() {
            break;
        }
        if g < T::zero() {
            a = x;
        } else {
            b = x;
        }
    }
    Ok(InverseResult {
        status: InverseStatus::Found,
        x_hat: x,
        residual: (curve(x) - target).abs(),
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::lookup_preset;
    use crate::drivers::sample_driver_paths;
    use crate::grid::make_grid;
    use crate::rng::RngSpec;

    fn grid21() -> Vec<f64> {
        (0..21).map(|i| -2.0 + 0.2 * i as f64).collect()
    }

    fn scan(preset: &str, shift: f64) -> HomeoReport<f64> {
        let p = sample_driver_paths(&make_grid(1.0, 8).unwrap(), 1, 8, RngSpec::new(2)).unwrap();
        let preset = lookup_preset(preset).unwrap();
        let mut prob = Problem::from_preset(&preset, 0.0);
        prob.terminal = prob.terminal.shifted(shift);
        monotonicity_scan(
            &prob,
            &grid21(),
            &p,
            &SchemeConfig::default(),
            &[0, 4],
            &Thresholds::default(),
        )
        .unwrap()
    }

    #[test]
    fn identity_and_cubic_flows_are_exact() {
        let id = scan("identity_terminal", 0.0);
        assert_eq!(id.total_violations(), 0);
        for (e, &x) in id.pooled[0].iter().zip(&id.xs) {
            assert_eq!(e.mean, x);
        }
        let cube = scan("cubic_terminal", 0.0);
        assert_eq!(cube.total_violations(), 0);
        assert!(cube.pass);
        assert_eq!(cube.range_growth.last().unwrap().max, 8.0);
    }

    #[test]
    fn translation_keeps_violations() {
        let a = scan("identity_terminal", 0.0);
        let b = scan("identity_terminal", 0.75);
        assert_eq!(a.violations, b.violations);
        for (ea, eb) in a.pooled[0].iter().zip(&b.pooled[0]) {
            assert_eq!(ea.mean + 0.75, eb.mean);
        }
    }

    #[test]
    fn inverse_identity_and_edges() {
        let id = scan("identity_terminal", 0.0);
        let r = inverse_probe(&id, 0.5, 0).unwrap();
        assert_eq!(r.status, InverseStatus::Found);
        assert!((r.x_hat - 0.5).abs() <= 1e-3);
        let cube = scan("cubic_terminal", 0.0);
        let r = inverse_probe(&cube, 8.0, 0).unwrap();
        assert_eq!(r.status, InverseStatus::Edge);
        assert_eq!(r.x_hat, 2.0);
        assert_eq!(inverse_probe(&cube, 9.0, 0).unwrap().status, InverseStatus::OutOfRange);
        assert!(inverse_probe(&cube, 1.0, 3).is_err());
    }

    #[test]
    fn unflagged_family_rejected() {
        let p = sample_driver_paths(&make_grid(1.0, 2).unwrap(), 1, 1, RngSpec::new(2)).unwrap();
        let prob = Problem::from_preset(&lookup_preset("constant_terminal").unwrap(), 0.0);
        assert!(monotonicity_scan(
            &prob,
            &[0.0, 1.0],
            &p,
            &SchemeConfig::default(),
            &[0],
            &Thresholds::default()
        )
        .is_err());
    }
}
