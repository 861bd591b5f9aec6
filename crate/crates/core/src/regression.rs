//! Least-squares projection onto polynomials in one state variable, the
//! estimator of conditional expectations given the forward state.
//!
//! A [`RegressionPlan`] depends only on the states, so one plan serves every
//! target regressed on the same node.

use crate::error::{LabError, Result};
use crate::scalar::Scalar;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionBasis<T> {
    pub degree: usize,
    /// Lower truncation quantile in `[0, 1)`.
    pub trunc_lo: T,
    /// Upper truncation quantile in `(trunc_lo, 1]`.
    pub trunc_hi: T,
}

impl<T: Scalar> Default for RegressionBasis<T> {
    fn default() -> Self {
        Self {
            degree: 3,
            trunc_lo: T::of(0.01),
            trunc_hi: T::of(0.99),
        }
    }
}

impl<T: Scalar> RegressionBasis<T> {
    pub fn new(degree: usize, trunc_lo: T, trunc_hi: T) -> Result<Self> {
        let b = Self {
            degree,
            trunc_lo,
            trunc_hi,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trunc_lo >= T::zero() && self.trunc_lo < self.trunc_hi && self.trunc_hi <= T::one()) {
            return Err(LabError::Config(format!(
                "truncation quantiles must satisfy 0 ≤ lo < hi ≤ 1, got {} and {}",
                self.trunc_lo, self.trunc_hi
            )));
        }
        if self.degree > 8 {
            return Err(LabError::Config(format!("basis degree {} exceeds 8", self.degree)));
        }
        Ok(())
    }
}

/// Polynomial `Σ c_k u^k` in the standardized state `u = (x − center)/scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedFunction<T> {
    pub coefficients: Vec<T>,
    pub center: T,
    pub scale: T,
    /// Out-of-sample states are clamped into `[lo, hi]` before evaluation.
    pub lo: T,
    pub hi: T,
}

impl<T: Scalar> FittedFunction<T> {
    pub fn degree(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Evaluates at an out-of-sample state.
    pub fn eval(&self, x: T) -> T {
        self.eval_raw(x.max(self.lo).min(self.hi))
    }

    fn eval_raw(&self, x: T) -> T {
        let u = (x - self.center) / self.scale;
        self.coefficients.iter().rev().fold(T::zero(), |acc, &c| acc * u + c)
    }
}

/// Standardized design and Cholesky factor of the normal equations for one
/// set of states.
#[derive(Debug, Clone)]
pub struct RegressionPlan<T> {
    requested: usize,
    degree: usize,
    center: T,
    scale: T,
    lo: T,
    hi: T,
    n: usize,
    /// Row-major `[n × (degree + 1)]`.
    design: Vec<T>,
    /// Lower-triangular, row-major `[(degree + 1) × (degree + 1)]`.
    chol: Vec<T>,
}

fn quantile_index(q: f64, n: usize, up: bool) -> usize {
    let pos = q * (n - 1) as f64;
    let i = if up { pos.ceil() } else { pos.floor() };
    (i as usize).min(n - 1)
}

fn cholesky<T: Scalar>(gram: &[T], k: usize) -> Option<Vec<T>> {
    let tol = T::epsilon().sqrt();
    let mut l = vec![T::zero(); k * k];
    for i in 0..k {
        for j in 0..=i {
            let mut s = gram[i * k + j];
            for p in 0..j {
                s = s - l[i * k + p] * l[j * k + p];
            }
            if i == j {
                if !(s > tol * gram[i * k + i]) {
                    return None;
                }
                l[i * k + i] = s.sqrt();
            } else {
                l[i * k + j] = s / l[j * k + j];
            }
        }
    }
    Some(l)
}

impl<T: Scalar> RegressionPlan<T> {
    pub fn new(states: &[T], basis: &RegressionBasis<T>) -> Result<Self> {
        basis.validate()?;
        let n = states.len();
        if n == 0 {
            return Err(LabError::Invalid("regression needs at least one state".into()));
        }
        if let Some(i) = states.iter().position(|v| !v.is_finite()) {
            return Err(LabError::Invalid(format!("non-finite state at W-path {i}")));
        }
        let mut sorted = states.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite states"));
        let distinct = 1 + sorted.windows(2).filter(|w| w[0] != w[1]).count();
        let lo = sorted[quantile_index(basis.trunc_lo.as_f64(), n, false)];
        let hi = sorted[quantile_index(basis.trunc_hi.as_f64(), n, true)];

        let center = stats::mean(states);
        let sd = stats::variance(states).sqrt();
        let scale = if sd > T::zero() { sd } else { T::one() };
        let mut degree = basis.degree.min(distinct - 1);
        let us: Vec<T> = states.iter().map(|&x| (x - center) / scale).collect();
        loop {
            let k = degree + 1;
            let mut design = Vec::with_capacity(n * k);
            for &u in &us {
                let mut p = T::one();
                for _ in 0..k {
                    design.push(p);
                    p = p * u;
                }
            }
            let inv_n = T::one() / T::of_usize(n);
            let mut gram = vec![T::zero(); k * k];
            for row in design.chunks_exact(k) {
                for i in 0..k {
                    for j in 0..=i {
                        gram[i * k + j] = gram[i * k + j] + row[i] * row[j];
                    }
                }
            }
            for i in 0..k {
                for j in 0..=i {
                    gram[i * k + j] = gram[i * k + j] * inv_n;
                    gram[j * k + i] = gram[i * k + j];
                }
            }
            match cholesky(&gram, k) {
                Some(chol) => {
                    return Ok(Self {
                        requested: basis.degree,
                        degree,
                        center,
                        scale,
                        lo,
                        hi,
                        n,
                        design,
                        chol,
                    })
                }
                // the constant column always factors
                None => degree -= 1,
            }
        }
    }

    /// Degree actually used; below the requested degree after rank reduction.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn reduced(&self) -> bool {
        self.degree < self.requested
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Fits `targets` and writes in-sample fitted values into `out`.
    pub fn fit_into(&self, targets: &[T], out: &mut [T]) -> Result<FittedFunction<T>> {
        if targets.len() != self.n {
            return Err(LabError::LengthMismatch {
                expected: self.n,
                got: targets.len(),
            });
        }
        if out.len() != self.n {
            return Err(LabError::LengthMismatch {
                expected: self.n,
                got: out.len(),
            });
        }
        let k = self.degree + 1;
        let coefficients = if k == 1 {
            vec![stats::mean(targets)]
        } else {
            let inv_n = T::one() / T::of_usize(self.n);
            let mut rhs = vec![T::zero(); k];
            for (row, &y) in self.design.chunks_exact(k).zip(targets) {
                for (r, &x) in rhs.iter_mut().zip(row) {
                    *r = *r + x * y;
                }
            }
            rhs.iter_mut().for_each(|r| *r = *r * inv_n);
            let l = &self.chol;
            let mut z = vec![T::zero(); k];
            for i in 0..k {
                let s = (0..i).fold(rhs[i], |s, p| s - l[i * k + p] * z[p]);
                z[i] = s / l[i * k + i];
            }
            let mut c = vec![T::zero(); k];
            for i in (0..k).rev() {
                let s = (i + 1..k).fold(z[i], |s, p| s - l[p * k + i] * c[p]);
                c[i] = s / l[i * k + i];
            }
            c
        };
        if k == 1 {
            out.iter_mut().for_each(|v| *v = coefficients[0]);
        } else {
            for (o, row) in out.iter_mut().zip(self.design.chunks_exact(k)) {
                *o = row.iter().zip(&coefficients).fold(T::zero(), |a, (&x, &c)| a + x * c);
            }
        }
        Ok(FittedFunction {
            coefficients,
            center: self.center,
            scale: self.scale,
            lo: self.lo,
            hi: self.hi,
        })
    }

    pub fn fit(&self, targets: &[T]) -> Result<(FittedFunction<T>, Vec<T>)> {
        let mut out = vec![T::zero(); self.n];
        let f = self.fit_into(targets, &mut out)?;
        Ok((f, out))
    }
}

/// Projects `targets` onto polynomials in `states`; returns the fitted
/// function and the in-sample fitted values.
pub fn regress_conditional<T: Scalar>(
    targets: &[T],
    states: &[T],
    basis: &RegressionBasis<T>,
) -> Result<(FittedFunction<T>, Vec<T>)> {
    if targets.len() != states.len() {
        return Err(LabError::LengthMismatch {
            expected: states.len(),
            got: targets.len(),
        });
    }
    RegressionPlan::new(states, basis)?.fit(targets)
}
