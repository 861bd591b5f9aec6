//! The random field `u(t, x) = Y_t^{t,x}` of the coupled forward-backward
//! system, sampled on a `(t, x)` lattice.

use crate::drivers::DriverPaths;
use crate::error::{LabError, Result};
use crate::lsmc::{solve_bdsde_lsmc, Problem, SchemeConfig};
use crate::scalar::Scalar;
use crate::stats::Estimate;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldReport<T> {
    pub t_indices: Vec<usize>,
    pub times: Vec<T>,
    pub xs: Vec<T>,
    /// `[t-row][x][B-path]`.
    pub per_b: Vec<Vec<Vec<Estimate<T>>>>,
    /// `[t-row][x]`.
    pub pooled: Vec<Vec<Estimate<T>>>,
}

impl<T: Scalar> FieldReport<T> {
    pub fn b_count(&self) -> usize {
        self.per_b.first().and_then(|r| r.first()).map_or(0, |v| v.len())
    }
}

/// Solves `problem` started at `(t_i, x)` for every lattice point. All
/// points share `paths`, so values are coupled across `x`.
pub fn spde_field<T: Scalar>(
    t_indices: &[usize],
    xs: &[T],
    problem: &Problem<T>,
    scheme: &SchemeConfig<T>,
    paths: &DriverPaths<T>,
) -> Result<FieldReport<T>> {
    if problem.forward.is_none() {
        return Err(LabError::Config("the field needs a forward leg".into()));
    }
    if t_indices.is_empty() || xs.is_empty() {
        return Err(LabError::Config("empty field lattice".into()));
    }
    let mut per_b = Vec::with_capacity(t_indices.len());
    let mut pooled = Vec::with_capacity(t_indices.len());
    for &ti in t_indices {
        let mut row_b = Vec::with_capacity(xs.len());
        let mut row = Vec::with_capacity(xs.len());
        for &x in xs {
            let p = problem.clone().starting_at(ti).at(x);
            let sol = solve_bdsde_lsmc(paths, &p, scheme)?;
            let ys = sol.y_per_b(ti);
            row.push(Estimate::pooled(&ys));
            row_b.push(ys);
        }
        per_b.push(row_b);
        pooled.push(row);
    }
    Ok(FieldReport {
        t_indices: t_indices.to_vec(),
        times: t_indices.iter().map(|&i| paths.grid().time(i)).collect(),
        xs: xs.to_vec(),
        per_b,
        pooled,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::lookup_preset;
    use crate::drivers::sample_driver_paths;
    use crate::grid::make_grid;
    use crate::rng::RngSpec;

    #[test]
    fn heat_kernel_second_moment() {
        let p = sample_driver_paths(&make_grid(1.0, 16).unwrap(), 8192, 2, RngSpec::new(3)).unwrap();
        let prob = Problem::from_preset(&lookup_preset("heat").unwrap(), 0.0);
        let f = spde_field(&[0, 8], &[0.0f64, 1.0], &prob, &SchemeConfig::default(), &p).unwrap();
        for (row, &t) in f.pooled.iter().zip(&f.times) {
            for (e, &x) in row.iter().zip(&f.xs) {
                let exact = x * x + 2.0 * (1.0 - t);
                assert!((e.mean - exact).abs() <= 3.0 * e.se, "t {t} x {x}: {e:?}");
            }
        }
        assert_eq!(f.b_count(), 2);
    }

    #[test]
    fn needs_forward_leg() {
        let p = sample_driver_paths(&make_grid(1.0, 2).unwrap(), 4, 1, RngSpec::new(3)).unwrap();
        let prob = Problem::from_preset(&lookup_preset("paper_arctan").unwrap(), 0.0);
        assert!(spde_field(&[0], &[0.0], &prob, &SchemeConfig::default(), &p).is_err());
    }
}
