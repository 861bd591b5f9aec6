//! Small summary-statistics helpers. Every reduction runs in slice order so
//! results never depend on scheduling.

use crate::scalar::Scalar;

/// Mean with an early exit for constant inputs, so constant data averages
/// to itself bit-exactly.
pub fn mean<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::nan();
    }
    let first = xs[0];
    if xs.iter().all(|&x| x == first) {
        return first;
    }
    xs.iter().fold(T::zero(), |a, &x| a + x) / T::of_usize(xs.len())
}

/// Unbiased sample variance; zero for fewer than two samples.
pub fn variance<T: Scalar>(xs: &[T]) -> T {
    if xs.len() < 2 {
        return T::zero();
    }
    let m = mean(xs);
    xs.iter().fold(T::zero(), |a, &x| a + (x - m) * (x - m)) / T::of_usize(xs.len() - 1)
}

/// Standard error of the mean.
pub fn std_error<T: Scalar>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    (variance(xs) / T::of_usize(xs.len())).sqrt()
}

/// Mean and standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub mean: T,
    pub se: T,
}

impl<T: Scalar> Estimate<T> {
    pub fn of(xs: &[T]) -> Self {
        Self {
            mean: mean(xs),
            se: std_error(xs),
        }
    }

    /// Pools per-group estimates whose within-group errors may be shared
    /// across groups: `se² = var_groups / n + mean(se_g²)`.
    pub fn pooled(groups: &[Estimate<T>]) -> Self {
        let means: Vec<T> = groups.iter().map(|g| g.mean).collect();
        let inner = if groups.is_empty() {
            T::zero()
        } else {
            groups.iter().fold(T::zero(), |a, g| a + g.se * g.se) / T::of_usize(groups.len())
        };
        let outer = std_error(&means);
        Self {
            mean: mean(&means),
            se: (outer * outer + inner).sqrt(),
        }
    }

    /// `sqrt(se_a² + se_b²)`.
    pub fn combined_se(&self, other: &Self) -> T {
        (self.se * self.se + other.se * other.se).sqrt()
    }
}

/// Ordinary least-squares line `y ≈ intercept + slope·x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Option<LineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_mean_is_exact() {
        let xs = vec![0.3f64; 8191];
        assert_eq!(mean(&xs), 0.3);
        assert_eq!(variance(&xs), 0.0);
    }

    #[test]
    fn basic_moments() {
        let xs = [1.0f64, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((variance(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((std_error(&xs) - (5.0f64 / 12.0).sqrt()).abs() < 1e-15);
        assert!(mean::<f64>(&[]).is_nan());
    }

    #[test]
    fn pooled_estimate() {
        let g = [Estimate { mean: 1.0, se: 0.1 }, Estimate { mean: 3.0, se: 0.1 }];
        let p = Estimate::pooled(&g);
        assert_eq!(p.mean, 2.0);
        assert!((p.se - (1.0f64 + 0.01).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let f = fit_line(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-14);
        assert!((f.intercept + 1.0).abs() < 1e-14);
        assert!((f.r_squared - 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
