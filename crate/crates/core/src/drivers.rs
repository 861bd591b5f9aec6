//! Paired independent Brownian drivers and the forward / backward Itô sums.

use rayon::prelude::*;

use crate::error::{LabError, Result};
use crate::grid::TimeGrid;
use crate::rng::{Driver, RngSpec};
use crate::scalar::Scalar;

/// Increments of `M_W` forward paths and `M_B` backward paths on one grid.
///
/// Matrices are row-major: row `m` holds the `N` increments of path `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct DriverPaths<T> {
    grid: TimeGrid<T>,
    w_count: usize,
    b_count: usize,
    dw: Vec<T>,
    db: Vec<T>,
    rng: RngSpec,
}

impl<T: Scalar> DriverPaths<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn w_count(&self) -> usize {
        self.w_count
    }

    pub fn b_count(&self) -> usize {
        self.b_count
    }

    pub fn rng(&self) -> RngSpec {
        self.rng
    }

    pub fn step_count(&self) -> usize {
        self.grid.step_count()
    }

    /// `ΔW` of path `m` (length `N`).
    pub fn dw(&self, m: usize) -> &[T] {
        let n = self.step_count();
        &self.dw[m * n..(m + 1) * n]
    }

    /// `ΔB` of path `m` (length `N`).
    pub fn db(&self, m: usize) -> &[T] {
        let n = self.step_count();
        &self.db[m * n..(m + 1) * n]
    }

    pub fn dw_matrix(&self) -> &[T] {
        &self.dw
    }

    pub fn db_matrix(&self) -> &[T] {
        &self.db
    }

    /// Mutable access to the backward increments, used to probe which
    /// increments a computation actually reads.
    pub fn db_mut(&mut self, m: usize) -> &mut [T] {
        let n = self.step_count();
        &mut self.db[m * n..(m + 1) * n]
    }

    /// Path values `W_{t_0}, ..., W_{t_N}` with `W_0 = 0`.
    pub fn w_path(&self, m: usize) -> Vec<T> {
        cumulative(self.dw(m))
    }

    /// Path values `B_{t_0}, ..., B_{t_N}` with `B_0 = 0`.
    pub fn b_path(&self, m: usize) -> Vec<T> {
        cumulative(self.db(m))
    }

    /// Column `i` of the forward increments.
    pub fn dw_column(&self, i: usize) -> Vec<T> {
        (0..self.w_count).map(|m| self.dw(m)[i]).collect()
    }

    pub fn db_column(&self, i: usize) -> Vec<T> {
        (0..self.b_count).map(|m| self.db(m)[i]).collect()
    }

    /// The same Brownian paths on the grid keeping every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        let n = self.step_count();
        if factor == 0 || !n.is_multiple_of(factor) {
            return Err(LabError::Config(format!(
                "coarsening factor {factor} does not divide {n} steps"
            )));
        }
        let nodes: Vec<T> = self.grid.nodes().iter().step_by(factor).copied().collect();
        let grid = TimeGrid::from_nodes(nodes)?;
        let sum = |m: &[T]| -> Vec<T> {
            m.chunks_exact(factor)
                .map(|c| c.iter().fold(T::zero(), |a, &v| a + v))
                .collect()
        };
        Ok(Self {
            grid,
            w_count: self.w_count,
            b_count: self.b_count,
            dw: sum(&self.dw),
            db: sum(&self.db),
            rng: self.rng,
        })
    }
}

fn cumulative<T: Scalar>(increments: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut acc = T::zero();
    out.push(acc);
    for &d in increments {
        acc = acc + d;
        out.push(acc);
    }
    out
}

fn fill_increments<T: Scalar>(grid: &TimeGrid<T>, rng: &RngSpec, driver: Driver, count: usize) -> Result<Vec<T>> {
    let n = grid.step_count();
    let len = count
        .checked_mul(n)
        .ok_or_else(|| LabError::Resource("increment matrix size overflows".into()))?;
    let mut out = Vec::new();
    out.try_reserve_exact(len)
        .map_err(|e| LabError::Resource(format!("cannot allocate {len} increments: {e}")))?;
    out.resize(len, T::zero());
    let sqrt_dt: Vec<f64> = grid.steps().map(|d| d.as_f64().sqrt()).collect();
    out.par_chunks_mut(n).enumerate().for_each(|(m, row)| {
        let mut s = rng.substream(driver, m, 0);
        for (v, h) in row.iter_mut().zip(&sqrt_dt) {
            *v = T::of(s.next_normal() * h);
        }
    });
    Ok(out)
}

/// Samples `M_W` paths of `W` and `M_B` paths of `B` from disjoint substreams.
pub fn sample_driver_paths<T: Scalar>(
    grid: &TimeGrid<T>,
    w_count: usize,
    b_count: usize,
    rng: RngSpec,
) -> Result<DriverPaths<T>> {
    if w_count == 0 || b_count == 0 {
        return Err(LabError::Config("path counts must be ≥ 1".into()));
    }
    let dw = fill_increments(grid, &rng, Driver::W, w_count)?;
    let db = fill_increments(grid, &rng, Driver::B, b_count)?;
    Ok(DriverPaths {
        grid: grid.clone(),
        w_count,
        b_count,
        dw,
        db,
        rng,
    })
}

/// Forward Itô sum `Σ_i integrand[i] · (W_{i+1} − W_i)`.
///
/// `integrand` carries one value per node; the last one is never read.
pub fn forward_ito_sum<T: Scalar>(path: &[T], integrand: &[T]) -> Result<T> {
    if integrand.len() != path.len() {
        return Err(LabError::LengthMismatch {
            expected: path.len(),
            got: integrand.len(),
        });
    }
    Ok(path
        .windows(2)
        .zip(integrand)
        .fold(T::zero(), |acc, (w, &v)| acc + v * (w[1] - w[0])))
}

/// Backward Itô sum `Σ_i integrand[i+1] · (B_{i+1} − B_i)`.
///
/// The integrand is read at the right endpoint; `integrand[0]` is never read.
pub fn backward_ito_sum<T: Scalar>(path: &[T], integrand: &[T]) -> Result<T> {
    if integrand.len() != path.len() {
        return Err(LabError::LengthMismatch {
            expected: path.len(),
            got: integrand.len(),
        });
    }
    Ok(path
        .windows(2)
        .zip(&integrand[1.min(integrand.len())..])
        .fold(T::zero(), |acc, (b, &v)| acc + v * (b[1] - b[0])))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn paths(w: usize, b: usize, seed: u64) -> DriverPaths<f64> {
        let g = make_grid(1.0, 8).unwrap();
        sample_driver_paths(&g, w, b, RngSpec::new(seed)).unwrap()
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let a = paths(50, 20, 3);
        let b = paths(50, 20, 3);
        assert_eq!(a, b);
        let c = paths(50, 20, 4);
        assert_ne!(a.dw_matrix(), c.dw_matrix());
    }

    #[test]
    fn prefix_stable_under_count_change() {
        let small = paths(10, 5, 9);
        let large = paths(40, 9, 9);
        for m in 0..10 {
            assert_eq!(small.dw(m), large.dw(m));
        }
        for m in 0..5 {
            assert_eq!(small.db(m), large.db(m));
        }
    }

    #[test]
    fn coarsening_keeps_endpoints() {
        let p = paths(3, 3, 2);
        let c = p.coarsen(4).unwrap();
        assert_eq!(c.step_count(), 2);
        for m in 0..3 {
            assert!((c.w_path(m)[2] - p.w_path(m)[8]).abs() < 1e-14);
            assert!((c.b_path(m)[1] - p.b_path(m)[4]).abs() < 1e-14);
        }
        assert!(p.coarsen(3).is_err());
    }

    #[test]
    fn zero_counts_rejected() {
        let g = make_grid(1.0, 4).unwrap();
        assert!(sample_driver_paths::<f64>(&g, 0, 3, RngSpec::new(1)).is_err());
        assert!(sample_driver_paths::<f64>(&g, 3, 0, RngSpec::new(1)).is_err());
    }

    #[test]
    fn cumulative_sums_recover_paths() {
        let p = paths(4, 4, 1);
        let w = p.w_path(2);
        assert_eq!(w[0], 0.0);
        for i in 0..8 {
            assert_eq!(w[i + 1], w[i] + p.dw(2)[i]);
        }
    }

    #[test]
    fn ito_sums_constant_and_zero() {
        let p = paths(1, 1, 5);
        let w = p.w_path(0);
        let b = p.b_path(0);
        let ones = [1.0; 9];
        let zeros = vec![0.0; 9];
        assert!((forward_ito_sum(&w[3..], &ones[3..]).unwrap() - (w[8] - w[3])).abs() < 1e-15);
        assert!((backward_ito_sum(&b[3..], &ones[3..]).unwrap() - (b[8] - b[3])).abs() < 1e-15);
        assert_eq!(forward_ito_sum(&w, &zeros).unwrap(), 0.0);
        assert_eq!(backward_ito_sum(&b, &zeros).unwrap(), 0.0);
        assert!(forward_ito_sum(&w, &zeros[1..]).is_err());
        assert!(backward_ito_sum(&b, &zeros[1..]).is_err());
    }
}
