//! Time discretization and the left-Riemann rule used for every `ds` integral.

use crate::error::{LabError, Result};
use crate::scalar::Scalar;

/// Discretization nodes `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid<T> {
    horizon: T,
    nodes: Vec<T>,
}

impl<T: Scalar> TimeGrid<T> {
    /// Uniform grid with spacing `T / N`.
    pub fn uniform(horizon: T, step_count: usize) -> Result<Self> {
        if !(horizon > T::zero()) || !horizon.is_finite() {
            return Err(LabError::Config(format!("horizon must be > 0, got {horizon}")));
        }
        if step_count == 0 {
            return Err(LabError::Config("step_count must be ≥ 1".into()));
        }
        let n = T::of_usize(step_count);
        let mut nodes: Vec<T> = (0..=step_count).map(|i| horizon * T::of_usize(i) / n).collect();
        nodes[step_count] = horizon;
        Ok(Self { horizon, nodes })
    }

    /// Arbitrary strictly increasing grid starting at zero.
    pub fn from_nodes(nodes: Vec<T>) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(LabError::Config("step_count must be ≥ 1".into()));
        }
        if nodes[0] != T::zero() {
            return Err(LabError::Config("first node must be 0".into()));
        }
        if nodes.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Config("nodes must be strictly increasing".into()));
        }
        let horizon = *nodes.last().unwrap();
        Ok(Self { horizon, nodes })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn step_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn time(&self, i: usize) -> T {
        self.nodes[i]
    }

    /// Length of step `i`, i.e. `t_{i+1} - t_i`.
    pub fn dt(&self, i: usize) -> T {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn steps(&self) -> impl Iterator<Item = T> + '_ {
        self.nodes.windows(2).map(|w| w[1] - w[0])
    }

    /// Left-Riemann sum `Σ_{i=from}^{to-1} integrand[i] · Δ_i`.
    pub fn time_quadrature(&self, integrand: &[T], from: usize, to: usize) -> Result<T> {
        if integrand.len() != self.nodes.len() {
            return Err(LabError::LengthMismatch {
                expected: self.nodes.len(),
                got: integrand.len(),
            });
        }
        if to > self.step_count() {
            return Err(LabError::IndexOutOfRange {
                index: to,
                limit: self.step_count(),
            });
        }
        if from > to {
            return Err(LabError::IndexOutOfRange { index: from, limit: to });
        }
        Ok((from..to).fold(T::zero(), |acc, i| acc + integrand[i] * self.dt(i)))
    }
}

/// Shorthand for [`TimeGrid::uniform`].
pub fn make_grid<T: Scalar>(horizon: T, step_count: usize) -> Result<TimeGrid<T>> {
    TimeGrid::uniform(horizon, step_count)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_nodes() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(1.0, 1).unwrap();
        assert_eq!(g.nodes(), &[0.0, 1.0]);
        let g = make_grid(0.5, 2).unwrap();
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5]);
    }

    #[test]
    fn rejects_bad_config() {
        assert!(matches!(make_grid(0.0, 4), Err(LabError::Config(_))));
        assert!(matches!(make_grid(-1.0, 4), Err(LabError::Config(_))));
        let err = make_grid(1.0, 0).unwrap_err();
        assert_eq!(err, LabError::Config("step_count must be ≥ 1".into()));
        assert!(TimeGrid::from_nodes(vec![0.0, 0.5, 0.5]).is_err());
        assert!(TimeGrid::from_nodes(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn quadrature() {
        let g = make_grid(1.0f64, 4).unwrap();
        let c = vec![2.5; 5];
        assert!((g.time_quadrature(&c, 0, 4).unwrap() - 2.5).abs() < 1e-15);
        assert_eq!(g.time_quadrature(&c, 2, 2).unwrap(), 0.0);
        let ident = g.nodes().to_vec();
        assert!((g.time_quadrature(&ident, 0, 4).unwrap() - 0.375).abs() < 1e-15);
        assert!(g.time_quadrature(&c, 0, 5).is_err());
        assert!(g.time_quadrature(&c, 3, 2).is_err());
        assert!(g.time_quadrature(&c[..4], 0, 2).is_err());
    }

    #[test]
    fn non_uniform_grid() {
        let g = TimeGrid::from_nodes(vec![0.0f64, 0.1, 0.5, 1.0]).unwrap();
        assert_eq!(g.step_count(), 3);
        assert!((g.dt(1) - 0.4).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn grid_invariants(horizon in 1e-3f64..50.0, n in 1usize..500) {
            let g = make_grid(horizon, n).unwrap();
            prop_assert_eq!(g.nodes().len(), n + 1);
            prop_assert_eq!(g.nodes()[0], 0.0);
            prop_assert_eq!(g.nodes()[n], horizon);
            prop_assert!(g.nodes().windows(2).all(|w| w[1] > w[0]));
            let total: f64 = g.steps().sum();
            prop_assert!((total - horizon).abs() <= 1e-12 * horizon);
        }
    }
}
