use super::{fraction, Provenance, Thresholds};
use crate::coefficients::AssumptionCard;
use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::linear::{bounding_envelope, EnvelopeSide};
use crate::lsmc::{solve_bdsde_lsmc, Problem, SchemeConfig};
use crate::rng::Driver;
use crate::scalar::Scalar;
use crate::stats::Estimate;

const DRIVER_PROBES: usize = 4096;
const PROBE_SCALE: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport<T> {
    pub t_index: usize,
    /// Per-`B`-path `Y¹_t − Y²_t`.
    pub differences: Vec<Estimate<T>>,
    /// Fraction of `B`-paths with `Y¹_t > Y²_t`.
    pub strict_fraction: f64,
    pub equal_fraction: f64,
    /// `min (ξ¹ − ξ²)` over sampled paths.
    pub epsilon: T,
    /// `e^{−kτ} ε − e^{kτ} β_T` with `k = C_f + C_g + α_g`, `τ = T − t`, `β ≡ 0`.
    pub bound: T,
    /// Smallest per-`B`-path difference minus `bound`.
    pub margin: T,
    pub threshold: f64,
    pub pass: bool,
    pub provenance: Provenance,
}

fn probe_points<T: Scalar>(paths: &DriverPaths<T>, stream: usize) -> Vec<[T; 4]> {
    let mut s = paths.rng().substream(Driver::Probe, stream, 0);
    let horizon = paths.grid().horizon().as_f64();
    (0..DRIVER_PROBES)
        .map(|_| {
            let (u, _) = s.next_pair();
            let mut n = || T::of(PROBE_SCALE * s.next_normal());
            let (x, y, z) = (n(), n(), n());
            [T::of(horizon * u), x, y, z]
        })
        .collect()
}

/// Checks hypothesis (i) and the shared loading on probe points.
fn check_pair<T: Scalar>(upper: &Problem<T>, lower: &Problem<T>, paths: &DriverPaths<T>) -> Result<()> {
    for [t, x, y, z] in probe_points(paths, 1) {
        let f1 = upper.driver.eval(t, x, y, z);
        let f2 = lower.driver.eval(t, x, y, z);
        let slack = T::of(1e-12) * (T::one() + f2.abs());
        if !(f1 >= f2 - slack) {
            return Err(LabError::Hypothesis(format!(
                "f¹ < f² at (t, x, y, z) = ({t}, {x}, {y}, {z}): {f1} < {f2}"
            )));
        }
        if upper.loading.eval(t, x) != lower.loading.eval(t, x) {
            return Err(LabError::Hypothesis(format!("loadings differ at (t, x) = ({t}, {x})")));
        }
    }
    Ok(())
}

/// Solves both equations on the same paths and tests `Y¹_t > Y²_t` per `B`-path.
pub fn comparison_check<T: Scalar>(
    upper: &Problem<T>,
    lower: &Problem<T>,
    paths: &DriverPaths<T>,
    card: &AssumptionCard<T>,
    scheme: &SchemeConfig<T>,
    t_index: usize,
    thresholds: &Thresholds,
) -> Result<ComparisonReport<T>> {
    check_pair(upper, lower, paths)?;
    let s1 = solve_bdsde_lsmc(paths, &upper.clone().starting_at(t_index), scheme)?;
    let s2 = solve_bdsde_lsmc(paths, &lower.clone().starting_at(t_index), scheme)?;
    let (l1, l2) = (s1.terminal.len(), s2.terminal.len());
    let epsilon = (0..l1.max(l2))
        .map(|i| s1.terminal[i % l1] - s2.terminal[i % l2])
        .fold(T::infinity(), |a, d| a.min(d));
    let differences: Vec<Estimate<T>> = (0..paths.b_count())
        .map(|b| {
            let a = s1.y_estimate(b, t_index);
            let c = s2.y_estimate(b, t_index);
            Estimate {
                mean: a.mean - c.mean,
                se: a.combined_se(&c),
            }
        })
        .collect();
    let strict = differences.iter().filter(|d| d.mean > T::zero()).count();
    let equal = differences.iter().filter(|d| d.mean == T::zero()).count();
    let grid = paths.grid();
    let k = card.driver_lipschitz + card.noise_lipschitz + card.noise_z_weight;
    let tau = grid.horizon() - grid.time(t_index);
    let bound = (-k * tau).exp() * epsilon;
    let worst = differences.iter().fold(T::infinity(), |a, d| a.min(d.mean));
    let strict_fraction = fraction(strict, differences.len());
    Ok(ComparisonReport {
        t_index,
        strict_fraction,
        equal_fraction: fraction(equal, differences.len()),
        epsilon,
        bound,
        margin: worst - bound,
        threshold: thresholds.pass_fraction,
        pass: strict_fraction >= thresholds.pass_fraction,
        differences,
        provenance: Provenance::of(paths),
    })
}

/// Envelope containment at one probe point beyond the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopePoint<T> {
    pub x: T,
    /// `Upper`: `Ŷ ≤ X^+` for `x < −M`. `Lower`: `X^- ≤ Ỹ` for `x > M`.
    pub side: EnvelopeSide,
    pub fraction: f64,
    /// Same check against the envelope whose drift sign matches the sign of
    /// `h(x)`; diagnostic only.
    pub sign_matched_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SandwichReport<T> {
    pub x: T,
    pub t_index: usize,
    /// Per-`B`-path `Ỹ`, `Y`, `Ŷ` at `(t, x)`.
    pub lower: Vec<Estimate<T>>,
    pub middle: Vec<Estimate<T>>,
    pub upper: Vec<Estimate<T>>,
    /// Fraction with `Ỹ ≤ Y ≤ Ŷ`.
    pub sandwich_fraction: f64,
    pub threshold_m: T,
    pub envelope_fraction: T,
    pub envelope: Vec<EnvelopePoint<T>>,
    /// Minimum over `x < −M` points.
    pub upper_envelope_fraction: f64,
    /// Minimum over `x > M` points.
    pub lower_envelope_fraction: f64,
    pub threshold: f64,
    pub pass: bool,
    pub provenance: Provenance,
}

/// Smallest `M ≥ R_0` with `|h(±x)| ≥ C_0 T e^{2 C_0 T} / (ε − ε_0)` for `|x| ≥ M`,
/// assuming `|h|` grows with `|x|`.
pub fn envelope_threshold<T: Scalar>(
    card: &AssumptionCard<T>,
    h: impl Fn(T) -> T,
    horizon: T,
    envelope_fraction: T,
) -> Result<T> {
    let c0 = card
        .driver_origin_bound
        .ok_or_else(|| LabError::Config("sandwich check needs C_0".into()))?;
    let gap = card.growth_floor - envelope_fraction;
    if !(gap > T::zero()) {
        return Err(LabError::Config("envelope fraction must be below ε".into()));
    }
    let need = c0 * horizon * (T::of(2.0) * c0 * horizon).exp() / gap;
    let r0 = card.growth_radius;
    let ok = |m: T| h(m).abs().min(h(-m).abs()) >= need;
    if ok(r0) {
        return Ok(r0);
    }
    let mut hi = r0.max(T::one());
    while !ok(hi) {
        hi = hi * T::of(2.0);
        if hi > T::of(1e12) {
            return Err(LabError::Hypothesis("|h| never reaches the envelope level".into()));
        }
    }
    let mut lo = r0;
    for _ in 0..200 {
        let mid = (lo + hi) / T::of(2.0);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn at<T: Scalar>(p: &Problem<T>, x: T, t_index: usize) -> Problem<T> {
    p.clone().at(x).starting_at(t_index)
}

/// Compares the solution with the solutions for the dominating drivers
/// `±(|f(t,x,0,0)| + C_f(|y| + |z|))`, and those with the explicit envelopes
/// `X^±` at `x = ±(M + 0.5), ±(M + 1), ±(M + 2)`.
#[allow(clippy::too_many_arguments)]
pub fn sandwich_check<T: Scalar>(
    problem: &Problem<T>,
    paths: &DriverPaths<T>,
    card: &AssumptionCard<T>,
    scheme: &SchemeConfig<T>,
    t_index: usize,
    envelope_fraction: Option<T>,
    thresholds: &Thresholds,
) -> Result<SandwichReport<T>> {
    if card.driver_origin_bound.is_none() {
        return Err(LabError::Config("sandwich check needs C_0".into()));
    }
    let h = problem
        .terminal
        .growth
        .clone()
        .ok_or_else(|| LabError::Config("sandwich check needs a growth function h".into()))?;
    let eps0 = envelope_fraction.unwrap_or_else(|| card.default_envelope_fraction());
    let cf = card.driver_lipschitz;
    let up = problem.clone().with_driver(problem.driver.dominating(cf, true));
    let down = problem.clone().with_driver(problem.driver.dominating(cf, false));
    let sigmas = T::of(thresholds.sigmas);

    let x = problem.x;
    let lower = solve_bdsde_lsmc(paths, &at(&down, x, t_index), scheme)?.y_per_b(t_index);
    let middle = solve_bdsde_lsmc(paths, &at(problem, x, t_index), scheme)?.y_per_b(t_index);
    let upper = solve_bdsde_lsmc(paths, &at(&up, x, t_index), scheme)?.y_per_b(t_index);
    let inside = (0..paths.b_count())
        .filter(|&b| {
            let (l, m, u) = (lower[b], middle[b], upper[b]);
            l.mean <= m.mean + sigmas * l.combined_se(&m) && m.mean <= u.mean + sigmas * m.combined_se(&u)
        })
        .count();
    let sandwich_fraction = fraction(inside, paths.b_count());

    let grid = paths.grid();
    let m = envelope_threshold(card, |v| h(v), grid.horizon(), eps0)?;
    let mut envelope = Vec::new();
    for off in [0.5, 1.0, 2.0] {
        for side in [EnvelopeSide::Upper, EnvelopeSide::Lower] {
            let (x, bound_problem) = match side {
                EnvelopeSide::Upper => (-(m + T::of(off)), &up),
                EnvelopeSide::Lower => (m + T::of(off), &down),
            };
            let sol = solve_bdsde_lsmc(paths, &at(bound_problem, x, t_index), scheme)?.y_per_b(t_index);
            let env = |s| {
                bounding_envelope(
                    x,
                    s,
                    &problem.loading,
                    cf,
                    card.growth_floor,
                    paths,
                    |v| h(v),
                    Some(eps0),
                    t_index,
                )
            };
            let stated = env(side)?;
            let matched = if h(x) < T::zero() {
                env(EnvelopeSide::Lower)?
            } else {
                stated.clone()
            };
            let holds = |e: &[T]| {
                let hits = sol
                    .iter()
                    .zip(e)
                    .filter(|(y, &v)| match side {
                        EnvelopeSide::Upper => y.mean <= v + sigmas * y.se,
                        EnvelopeSide::Lower => v <= y.mean + sigmas * y.se,
                    })
                    .count();
                fraction(hits, sol.len())
            };
            envelope.push(EnvelopePoint {
                x,
                side,
                fraction: holds(&stated),
                sign_matched_fraction: holds(&matched),
            });
        }
    }
    let side_min = |s: EnvelopeSide| {
        envelope
            .iter()
            .filter(|p| p.side == s)
            .fold(1.0f64, |a, p| a.min(p.fraction))
    };
    let upper_envelope_fraction = side_min(EnvelopeSide::Upper);
    let lower_envelope_fraction = side_min(EnvelopeSide::Lower);
    let pass = sandwich_fraction >= thresholds.pass_fraction
        && upper_envelope_fraction >= thresholds.pass_fraction
        && lower_envelope_fraction >= thresholds.pass_fraction;
    Ok(SandwichReport {
        x,
        t_index,
        lower,
        middle,
        upper,
        sandwich_fraction,
        threshold_m: m,
        envelope_fraction: eps0,
        envelope,
        upper_envelope_fraction,
        lower_envelope_fraction,
        threshold: thresholds.pass_fraction,
        pass,
        provenance: Provenance::of(paths),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{lookup_preset, DriverSpec, TerminalFamily};
    use crate::drivers::sample_driver_paths;
    use crate::grid::make_grid;
    use crate::linear::{explicit_linear_solution, LinearBdsdeSpec, LinearTerminal};
    use crate::rng::RngSpec;

    fn paths(b: usize) -> DriverPaths<f64> {
        sample_driver_paths(&make_grid(1.0, 32).unwrap(), 1, b, RngSpec::new(11)).unwrap()
    }

    #[test]
    fn identical_problems_tie() {
        let p = paths(16);
        let preset = lookup_preset("paper_arctan").unwrap();
        let prob = Problem::from_preset(&preset, 0.3);
        let r = comparison_check(
            &prob,
            &prob,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.strict_fraction, 0.0);
        assert_eq!(r.equal_fraction, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn additive_shift_is_exact() {
        let p = paths(16);
        let preset = lookup_preset("identity_terminal").unwrap();
        let lo = Problem::from_preset(&preset, 0.0);
        let hi = lo.clone().with_terminal(TerminalFamily::identity().shifted(1.0));
        let r = comparison_check(
            &hi,
            &lo,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            &Thresholds::default(),
        )
        .unwrap();
        assert!(r.differences.iter().all(|d| d.mean == 1.0));
        assert_eq!(r.epsilon, 1.0);
        assert!(r.pass);
        // equal drivers, so swapping keeps hypothesis (i)
        let swapped = comparison_check(
            &lo,
            &hi,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            &Thresholds::default(),
        )
        .unwrap();
        for (a, b) in r.differences.iter().zip(&swapped.differences) {
            assert_eq!(a.mean, -b.mean);
        }
    }

    #[test]
    fn driver_order_enforced() {
        let p = paths(2);
        let preset = lookup_preset("identity_terminal").unwrap();
        let lo = Problem::from_preset(&preset, 0.0);
        let hi = lo.clone().with_driver(DriverSpec::linear(1.0, 0.0));
        let r = comparison_check(
            &hi,
            &lo,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            &Thresholds::default(),
        );
        assert!(matches!(r, Err(LabError::Hypothesis(_))), "{r:?}");
    }

    #[test]
    fn constant_terminal_sandwich() {
        let p = paths(8);
        let preset = lookup_preset("constant_terminal").unwrap();
        let prob = Problem::from_preset(&preset, 0.0).with_terminal(TerminalFamily::constant(0.0).with_growth(|x| x));
        let r = sandwich_check(
            &prob,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            None,
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.sandwich_fraction, 1.0);
        assert!(r.lower.iter().chain(&r.middle).chain(&r.upper).all(|e| e.mean == 0.0));

        // a nonzero constant is moved by the dominating drivers ±C_f|y|
        let prob = prob.with_terminal(TerminalFamily::constant(2.0).with_growth(|x| x));
        let r = sandwich_check(
            &prob,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            None,
            &Thresholds::default(),
        )
        .unwrap();
        assert_eq!(r.sandwich_fraction, 1.0);
        assert!(r.middle.iter().all(|e| e.mean == 2.0));
        assert!(r.lower.iter().zip(&r.upper).all(|(l, u)| l.mean < 2.0 && u.mean > 2.0));
    }

    #[test]
    fn upper_solution_matches_linear_oracle() {
        let p = paths(8);
        let preset = lookup_preset("identity_terminal").unwrap();
        let prob = Problem::from_preset(&preset, 3.0);
        let r = sandwich_check(
            &prob,
            &p,
            &preset.card,
            &SchemeConfig::default(),
            0,
            None,
            &Thresholds::default(),
        )
        .unwrap();
        let up = Estimate::pooled(&r.upper);
        let spec = LinearBdsdeSpec::constant(33, 1.0, 0.0, 0.0).with_terminal(LinearTerminal::Constant(3.0));
        let oracle = explicit_linear_solution(&spec, &p, 0).unwrap().pooled;
        assert!((oracle.mean - 3.0 * 1.0f64.exp()).abs() < 1e-12, "{oracle:?}");
        let tol = (3.0 * up.combined_se(&oracle)).max(0.02 * oracle.mean);
        assert!((up.mean - oracle.mean).abs() <= tol, "{} vs {}", up.mean, oracle.mean);
    }

    #[test]
    fn threshold_inversion() {
        let mut card = lookup_preset::<f64>("paper_arctan").unwrap().card;
        assert_eq!(envelope_threshold(&card, |x| x, 1.0, 0.25).unwrap(), 1.0);
        card.driver_origin_bound = Some(0.5);
        let need = 0.5 * 1.0f64.exp() / 0.25;
        let m = envelope_threshold(&card, |x| x, 1.0, 0.25).unwrap();
        assert!((m - need).abs() < 1e-9);
        card.driver_origin_bound = None;
        assert!(envelope_threshold(&card, |x| x, 1.0, 0.25).is_err());
    }
}
