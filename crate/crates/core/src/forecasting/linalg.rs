//! Small dense solvers for the least-squares problems in this module.

use crate::scalar::Scalar;

/// Solves `a x = b` for square `a` (row-major, `n x n`) by Gaussian elimination
/// with partial pivoting. Returns `None` when a pivot falls below `tol`
/// relative to the largest diagonal magnitude.
pub(crate) fn solve<T: Scalar>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Option<Vec<T>> {
    debug_assert_eq!(a.len(), n * n);
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(T::zero(), T::max).max(T::one());
    let tol = scale * T::epsilon() * T::of(64.0);
    for col in 0..n {
        let (piv, max) = (col..n)
            .map(|r| (r, a[r * n + col].abs()))
            .fold((col, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if !(max > tol) {
            return None;
        }
        if piv != col {
            for k in 0..n {
                a.swap(piv * n + k, col * n + k);
            }
            b.swap(piv, col);
        }
        let p = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / p;
            if f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = a[col * n + k];
                a[r * n + k] -= f * v;
            }
            let bc = b[col];
            b[r] -= f * bc;
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut s = b[r];
        for k in r + 1..n {
            s -= a[r * n + k] * x[k];
        }
        x[r] = s / a[r * n + r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Linear model `intercept + coef . x`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LinearFit<T> {
    pub intercept: T,
    pub coef: Vec<T>,
}

impl<T: Scalar> LinearFit<T> {
    pub fn predict(&self, x: &[T]) -> T {
        self.intercept + self.coef.iter().zip(x).map(|(&c, &v)| c * v).sum::<T>()
    }
}

/// Ridge regression with an unpenalized intercept. Rows are produced on demand
/// so callers never materialize the design matrix. `penalty` scales with the
/// number of rows so its strength does not depend on the sample count.
pub(crate) fn ridge<T: Scalar, I>(rows: I, dim: usize, lambda: T) -> Option<LinearFit<T>>
where
    I: IntoIterator<Item = (Vec<T>, T)>,
{
    let n = dim + 1;
    let mut xtx = vec![T::zero(); n * n];
    let mut xty = vec![T::zero(); n];
    let mut count = 0usize;
    let mut ext = vec![T::one(); n];
    for (x, y) in rows {
        debug_assert_eq!(x.len(), dim);
        ext[1..].copy_from_slice(&x);
        for i in 0..n {
            let xi = ext[i];
            xty[i] += xi * y;
            for j in i..n {
                xtx[i * n + j] += xi * ext[j];
            }
        }
        count += 1;
    }
    if count == 0 {
        return None;
    }
    for i in 0..n {
        for j in 0..i {
            xtx[i * n + j] = xtx[j * n + i];
        }
    }
    let pen = lambda * T::of_usize(count);
    for i in 1..n {
        xtx[i * n + i] += pen;
    }
    let beta = solve(xtx, xty, n)?;
    Some(LinearFit { intercept: beta[0], coef: beta[1..].to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_system() {
        let x = solve(vec![2.0_f64, 1.0, 1.0, 3.0], vec![3.0, 5.0], 2).unwrap();
        assert!((x[0] - 0.8).abs() < 1e-12 && (x[1] - 1.4).abs() < 1e-12);
        assert!(solve(vec![1.0, 2.0, 2.0, 4.0], vec![1.0, 2.0], 2).is_none());
    }

    #[test]
    fn ridge_recovers_exact_line() {
        let rows = (0..50).map(|i| {
            let x = i as f64 / 10.0;
            (vec![x], 3.0 + 2.0 * x)
        });
        let fit = ridge(rows, 1, 0.0).unwrap();
        assert!((fit.intercept - 3.0).abs() < 1e-9 && (fit.coef[0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn collinear_design_needs_ridge() {
        let rows = || (0..20).map(|i| (vec![i as f64, 2.0 * i as f64], i as f64));
        assert!(ridge(rows(), 2, 0.0).is_none());
        assert!(ridge(rows(), 2, 1e-3).is_some());
    }
}
