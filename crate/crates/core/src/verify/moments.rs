use rayon::prelude::*;

use super::Provenance;
use crate::coefficients::{AssumptionCard, ForwardSpec};
use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::forward::euler_forward;
use crate::lsmc::{solve_bdsde_lsmc, Problem, SchemeConfig};
use crate::rng::Driver;
use crate::scalar::Scalar;
use crate::stats::{fit_line, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    /// `E sup_t |Y^x − Y^y|²` against `|x − y|`.
    Holder,
    /// `E sup_t |Y^x|^{4β}` against `|x|`.
    NegativeSolution,
    /// `E |X^{t,x}_s|^{2β}` against `|x|`.
    NegativeForward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentPoint<T> {
    /// `|x − y|` or `|x|`.
    pub abscissa: T,
    pub estimate: Estimate<T>,
    /// Forward moments only: estimate divided by `|x|^{2β}`.
    pub ratio: Option<Estimate<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentReport<T> {
    pub kind: MomentKind,
    pub points: Vec<MomentPoint<T>>,
    /// Least-squares slope of `log estimate` against `log abscissa`.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Negative solution moments: consecutive estimates never rise by more
    /// than the tolerance.
    pub non_increasing: Option<bool>,
    /// Forward moments: largest ratio, the empirical constant.
    pub empirical_constant: Option<T>,
    pub provenance: Provenance,
}

fn log_fit<T: Scalar>(points: &[MomentPoint<T>]) -> (f64, f64, f64) {
    let xs: Vec<f64> = points.iter().map(|p| p.abscissa.as_f64().ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.estimate.mean.as_f64().ln()).collect();
    if xs.iter().chain(&ys).any(|v| !v.is_finite()) {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    fit_line(&xs, &ys).map_or((f64::NAN, f64::NAN, f64::NAN), |f| (f.slope, f.intercept, f.r_squared))
}

/// Estimates `E sup_t |Y^x − Y^y|²` for each pair on shared paths.
pub fn holder_moment_estimate<T: Scalar>(
    problem: &Problem<T>,
    pairs: &[(T, T)],
    radius: T,
    paths: &DriverPaths<T>,
    scheme: &SchemeConfig<T>,
) -> Result<MomentReport<T>> {
    if pairs.len() < 3 {
        return Err(LabError::Config(format!("need ≥ 3 pairs, got {}", pairs.len())));
    }
    if let Some(&(x, y)) = pairs
        .iter()
        .find(|(x, y)| x.abs() > radius || y.abs() > radius || x == y)
    {
        return Err(LabError::Config(format!(
            "pair ({x}, {y}) is degenerate or leaves the radius {radius}"
        )));
    }
    let scheme = scheme.clone().storing_paths();
    let mut points = Vec::with_capacity(pairs.len());
    for &(x, y) in pairs {
        let sx = solve_bdsde_lsmc(paths, &problem.clone().at(x), &scheme)?;
        let sy = solve_bdsde_lsmc(paths, &problem.clone().at(y), &scheme)?;
        let estimate = sx.pathwise_sup(Some(&sy), |a, b| (a - b) * (a - b))?;
        points.push(MomentPoint {
            abscissa: (x - y).abs(),
            estimate,
            ratio: None,
        });
    }
    let (slope, intercept, r_squared) = log_fit(&points);
    Ok(MomentReport {
        kind: MomentKind::Holder,
        points,
        slope,
        intercept,
        r_squared,
        non_increasing: None,
        empirical_constant: None,
        provenance: Provenance::of(paths),
    })
}

/// Estimates `E sup_t |Y^x|^{4β}` along `xs` for an equation without
/// backward noise, and tests that the sequence does not increase.
pub fn negative_moment_decay<T: Scalar>(
    problem: &Problem<T>,
    xs: &[T],
    beta: T,
    card: &AssumptionCard<T>,
    paths: &DriverPaths<T>,
    scheme: &SchemeConfig<T>,
    sigmas: T,
) -> Result<MomentReport<T>> {
    if !problem.loading.is_zero() {
        return Err(LabError::Hypothesis("negative moments need a zero loading".into()));
    }
    let limit = card.moment_exponent_limit();
    if !(beta < limit) {
        return Err(LabError::Hypothesis(format!("β = {beta} must be below {limit}")));
    }
    if xs.len() < 2 {
        return Err(LabError::Config("need ≥ 2 points".into()));
    }
    let scheme = scheme.clone().storing_paths();
    let power = T::of(4.0) * beta;
    let points: Vec<MomentPoint<T>> = xs
        .iter()
        .map(|&x| {
            let s = solve_bdsde_lsmc(paths, &problem.clone().at(x), &scheme)?;
            Ok(MomentPoint {
                abscissa: x.abs(),
                estimate: s.pathwise_sup(None, |a, _| a.abs().powf(power))?,
                ratio: None,
            })
        })
        .collect::<Result<_>>()?;
    let non_increasing = points
        .windows(2)
        .all(|w| w[1].estimate.mean <= w[0].estimate.mean + sigmas * w[0].estimate.combined_se(&w[1].estimate));
    let (slope, intercept, r_squared) = log_fit(&points);
    Ok(MomentReport {
        kind: MomentKind::NegativeSolution,
        points,
        slope,
        intercept,
        r_squared,
        non_increasing: Some(non_increasing),
        empirical_constant: None,
        provenance: Provenance::of(paths),
    })
}

const GROWTH_PROBES: usize = 4096;

/// Probes `|b(x)| + |σ(x)| ≤ c_1 |x|`.
fn forward_growth_audit<T: Scalar>(fwd: &ForwardSpec<T>, c1: T, paths: &DriverPaths<T>) -> Result<()> {
    if !fwd.claims_linear_growth {
        return Err(LabError::Hypothesis(format!(
            "forward spec {} does not claim linear growth",
            fwd.name
        )));
    }
    let mut s = paths.rng().substream(Driver::Probe, 2, 0);
    for _ in 0..GROWTH_PROBES {
        let x = T::of(5.0 * s.next_normal());
        let lhs = fwd.b(x).abs() + fwd.sigma(x).abs();
        if !(lhs <= c1 * x.abs() * (T::one() + T::of(1e-9))) {
            return Err(LabError::Hypothesis(format!(
                "|b| + |σ| = {lhs} exceeds c_1 |x| = {} at x = {x}",
                c1 * x.abs()
            )));
        }
    }
    Ok(())
}

/// Estimates `E |X^{t,x}_s|^{2β}` and its ratio to `|x|^{2β}`.
#[allow(clippy::too_many_arguments)]
pub fn forward_moment_check<T: Scalar>(
    fwd: &ForwardSpec<T>,
    beta: T,
    xs: &[T],
    card: &AssumptionCard<T>,
    paths: &DriverPaths<T>,
    t_index: usize,
    s_index: usize,
) -> Result<MomentReport<T>> {
    if !(beta < T::zero()) {
        return Err(LabError::Hypothesis(format!("β = {beta} must be negative")));
    }
    if let Some(x) = xs.iter().find(|x| !(x.abs() > T::one())) {
        return Err(LabError::Config(format!("probe x = {x} needs |x| > 1")));
    }
    if s_index < t_index || s_index > paths.step_count() {
        return Err(LabError::IndexOutOfRange {
            index: s_index,
            limit: paths.step_count(),
        });
    }
    forward_growth_audit(fwd, card.forward_growth, paths)?;
    let power = T::of(2.0) * beta;
    let points: Vec<MomentPoint<T>> = xs
        .par_iter()
        .map(|&x| {
            let f = euler_forward(paths, fwd, t_index, x)?;
            let vals: Vec<T> = f.node(s_index).iter().map(|v| v.abs().powf(power)).collect();
            let estimate = Estimate::of(&vals);
            let norm = x.abs().powf(power);
            Ok(MomentPoint {
                abscissa: x.abs(),
                estimate,
                ratio: Some(Estimate {
                    mean: estimate.mean / norm,
                    se: estimate.se / norm,
                }),
            })
        })
        .collect::<Result<_>>()?;
    let empirical_constant = points
        .iter()
        .filter_map(|p| p.ratio.map(|r| r.mean))
        .fold(T::neg_infinity(), |a, v| a.max(v));
    let (slope, intercept, r_squared) = log_fit(&points);
    Ok(MomentReport {
        kind: MomentKind::NegativeForward,
        points,
        slope,
        intercept,
        r_squared,
        non_increasing: None,
        empirical_constant: Some(empirical_constant),
        provenance: Provenance::of(paths),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{lookup_preset, NoiseLoadingSpec};
    use crate::drivers::sample_driver_paths;
    use crate::grid::make_grid;
    use crate::rng::RngSpec;

    fn paths(w: usize, b: usize) -> DriverPaths<f64> {
        sample_driver_paths(&make_grid(1.0, 16).unwrap(), w, b, RngSpec::new(21)).unwrap()
    }

    #[test]
    fn holder_identity_is_exact_square() {
        let p = paths(1, 4);
        let preset = lookup_preset("identity_terminal").unwrap();
        let prob = Problem::from_preset(&preset, 0.0);
        let pairs = [(0.0, 0.5), (0.0, 0.25), (0.0, 0.125)];
        let r = holder_moment_estimate(&prob, &pairs, 1.0, &p, &SchemeConfig::default()).unwrap();
        for pt in &r.points {
            assert_eq!(pt.estimate.mean, pt.abscissa * pt.abscissa);
        }
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert!(holder_moment_estimate(&prob, &pairs[..2], 1.0, &p, &SchemeConfig::default()).is_err());
        assert!(holder_moment_estimate(
            &prob,
            &[(0.0, 2.0), (0.0, 1.0), (0.0, 0.5)],
            1.0,
            &p,
            &SchemeConfig::default()
        )
        .is_err());
    }

    #[test]
    fn negative_moments_exact_powers() {
        let p = paths(1, 4);
        for (name, expo) in [("identity_terminal", -1), ("cubic_terminal", -3)] {
            let preset = lookup_preset(name).unwrap();
            let prob = Problem::from_preset(&preset, 0.0);
            let xs = [2.0, 4.0, 8.0, 16.0];
            let r = negative_moment_decay(&prob, &xs, -0.25, &preset.card, &p, &SchemeConfig::default(), 3.0).unwrap();
            for (pt, &x) in r.points.iter().zip(&xs) {
                let exact = f64::powi(x, expo);
                assert!((pt.estimate.mean - exact).abs() <= 1e-15 * exact.max(1.0), "{name} {x}");
            }
            assert_eq!(r.non_increasing, Some(true));
        }
        let preset = lookup_preset("identity_terminal").unwrap();
        let mut prob = Problem::from_preset(&preset, 0.0);
        prob.loading = NoiseLoadingSpec::constant(0.1);
        assert!(negative_moment_decay(
            &prob,
            &[2.0, 4.0],
            -0.25,
            &preset.card,
            &p,
            &SchemeConfig::default(),
            3.0
        )
        .is_err());
    }

    #[test]
    fn forward_moments_deterministic_flows() {
        let p = paths(64, 1);
        let card = lookup_preset::<f64>("gbm").unwrap().card;
        let r = forward_moment_check(&ForwardSpec::frozen(), -0.5, &[2.0, 4.0], &card, &p, 0, 16).unwrap();
        assert_eq!(r.empirical_constant, Some(1.0));
        let mu = 0.05;
        let r = forward_moment_check(&ForwardSpec::geometric(mu, 0.0), -0.5, &[2.0, -3.0], &card, &p, 4, 16).unwrap();
        let discrete = (1.0f64 + mu / 16.0).powi(-12);
        for pt in &r.points {
            assert!((pt.ratio.unwrap().mean - discrete).abs() < 1e-13);
        }
        // continuous-time constant e^{2βμ(s−t)} up to O(Δ)
        assert!((r.empirical_constant.unwrap() - (-mu * 0.75f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn forward_preconditions() {
        let p = paths(4, 1);
        let card = lookup_preset::<f64>("gbm").unwrap().card;
        let fw = ForwardSpec::geometric(0.05, 0.2);
        assert!(forward_moment_check(&fw, 0.5, &[2.0], &card, &p, 0, 16).is_err());
        assert!(forward_moment_check(&fw, -0.5, &[0.5], &card, &p, 0, 16).is_err());
        assert!(forward_moment_check(&ForwardSpec::additive(0.0, 1.0), -0.5, &[2.0], &card, &p, 0, 16).is_err());
    }
}
