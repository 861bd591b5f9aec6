//! Euler scheme for the forward leg `dX = b(X) dt + σ(X) dW`.

use crate::coefficients::ForwardSpec;
use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Forward states started from `x` at node `t_index`, stored node-major so
/// each node's cross-section over `W`-paths is contiguous.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardPaths<T> {
    pub t_index: usize,
    pub x: T,
    w_count: usize,
    node_count: usize,
    values: Vec<T>,
}

impl<T: Scalar> ForwardPaths<T> {
    /// `X_{t_i}` across all `W`-paths.
    pub fn node(&self, i: usize) -> &[T] {
        &self.values[i * self.w_count..(i + 1) * self.w_count]
    }

    pub fn get(&self, w: usize, i: usize) -> T {
        self.values[i * self.w_count + w]
    }

    pub fn path(&self, w: usize) -> Vec<T> {
        (0..self.node_count).map(|i| self.get(w, i)).collect()
    }

    pub fn terminal(&self) -> &[T] {
        self.node(self.node_count - 1)
    }

    pub fn w_count(&self) -> usize {
        self.w_count
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }
}

/// `X_{i+1} = X_i + b(X_i) Δ_i + σ(X_i) ΔW_i` from node `t_index`.
pub fn euler_forward<T: Scalar>(
    paths: &DriverPaths<T>,
    fwd: &ForwardSpec<T>,
    t_index: usize,
    x: T,
) -> Result<ForwardPaths<T>> {
    let n = paths.step_count();
    if t_index > n {
        return Err(LabError::IndexOutOfRange {
            index: t_index,
            limit: n,
        });
    }
    if !x.is_finite() {
        return Err(LabError::Invalid(format!("non-finite start state {x}")));
    }
    let m = paths.w_count();
    let grid = paths.grid();
    let mut values = vec![x; m * (n + 1)];
    let dw = paths.dw_matrix();
    for i in t_index..n {
        let dt = grid.dt(i);
        let (head, tail) = values.split_at_mut((i + 1) * m);
        let cur = &head[i * m..];
        let next = &mut tail[..m];
        for w in 0..m {
            let xi = cur[w];
            let v = xi + fwd.b(xi) * dt + fwd.sigma(xi) * dw[w * n + i];
            if !v.is_finite() {
                return Err(LabError::NonFinite {
                    b_path: 0,
                    w_path: w,
                    node: i + 1,
                });
            }
            next[w] = v;
        }
    }
    Ok(ForwardPaths {
        t_index,
        x,
        w_count: m,
        node_count: n + 1,
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drivers::sample_driver_paths;
    use crate::grid::make_grid;
    use crate::rng::RngSpec;
    use crate::stats::Estimate;

    fn paths(w: usize, n: usize) -> DriverPaths<f64> {
        sample_driver_paths(&make_grid(1.0, n).unwrap(), w, 1, RngSpec::new(5)).unwrap()
    }

    #[test]
    fn frozen_is_constant() {
        let p = paths(16, 8);
        let f = euler_forward(&p, &ForwardSpec::frozen(), 0, 1.3).unwrap();
        for i in 0..=8 {
            assert!(f.node(i).iter().all(|&v| v == 1.3));
        }
    }

    #[test]
    fn deterministic_compounding() {
        let p = paths(4, 32);
        let fw = ForwardSpec::geometric(1.0, 0.0);
        let f = euler_forward(&p, &fw, 0, 2.0).unwrap();
        let expect = 2.0 * (1.0f64 + 1.0 / 32.0).powi(32);
        for &v in f.terminal() {
            assert!((v - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn start_node_and_before_hold_x() {
        let p = paths(8, 8);
        let f = euler_forward(&p, &ForwardSpec::additive(0.0, 1.0), 3, -0.5).unwrap();
        for i in 0..=3 {
            assert!(f.node(i).iter().all(|&v| v == -0.5));
        }
        assert!(f.node(4).iter().any(|&v| v != -0.5));
        assert!(euler_forward(&p, &ForwardSpec::frozen(), 9, 0.0).is_err());
    }

    #[test]
    fn gbm_mean() {
        let p = paths(8192, 32);
        let f = euler_forward(&p, &ForwardSpec::geometric(0.05, 0.2), 0, 1.0).unwrap();
        let e = Estimate::of(f.terminal());
        let exact = 0.05f64.exp();
        assert!(
            (e.mean - exact).abs() <= 3.0 * e.se,
            "{} vs {exact} (se {})",
            e.mean,
            e.se
        );
    }

    #[test]
    fn blow_up_names_path() {
        let p = paths(2, 4);
        let fw = ForwardSpec::new(
            "blow",
            |x: f64| x * 1e300,
            |_| 0.0,
            |x| x,
            crate::coefficients::Monotonicity::Increasing,
            false,
        );
        let err = euler_forward(&p, &fw, 0, 1e10).unwrap_err();
        assert!(matches!(err, LabError::NonFinite { w_path: 0, node: 1, .. }));
    }
}
