//! ARMA estimation on an already differenced series by conditional least squares.
//!
//! Pure AR terms come straight from the normal equations. Moving-average terms
//! use a two-pass regression: a long autoregression supplies residual proxies,
//! which then enter the final regression as lagged regressors.

use super::linalg::ridge;
use super::ForecastError;
use crate::scalar::Scalar;

pub(crate) const MAX_ORDER: usize = 8;
/// Residual recursion restarts this many steps before the forecast origin.
pub(crate) const RESIDUAL_WINDOW: usize = 1000;
/// Upper bound on the sum of MA magnitudes, which keeps the recursion invertible.
const MA_BOUND: f64 = 0.98;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct ArimaFit<T> {
    pub c: T,
    pub ar: Vec<T>,
    pub ma: Vec<T>,
    pub sigma2: T,
}

fn long_ar_order(p: usize, q: usize) -> usize {
    (2 * (p + q).max(4)).min(20)
}

fn window_finite<T: Scalar>(z: &[T], i: usize, lags: usize) -> bool {
    i >= lags && z[i - lags..=i].iter().all(|v| v.is_finite())
}

impl<T: Scalar> ArimaFit<T> {
    pub fn fit(z: &[T], rows: &[usize], p: usize, q: usize) -> Result<Self, ForecastError> {
        let needed = 10 * (p + q + 1) + 1;
        let ar_rows: Vec<usize> = rows.iter().copied().filter(|&i| window_finite(z, i, p)).collect();
        if ar_rows.len() < needed {
            return Err(ForecastError::TooFewRows { needed, actual: ar_rows.len() });
        }
        let mut fit = if q == 0 {
            let lin = ridge(ar_rows.iter().map(|&i| (lags(z, i, p), z[i])), p, T::zero())
                .ok_or_else(|| ForecastError::Degenerate("singular AR normal equations".into()))?;
            ArimaFit { c: lin.intercept, ar: lin.coef, ma: Vec::new(), sigma2: T::zero() }
        } else {
            let m = long_ar_order(p, q);
            let long_rows: Vec<usize> = rows.iter().copied().filter(|&i| window_finite(z, i, m)).collect();
            let long = ridge(long_rows.iter().map(|&i| (lags(z, i, m), z[i])), m, T::zero())
                .ok_or_else(|| ForecastError::Degenerate("singular long autoregression".into()))?;
            let proxy: Vec<T> = (0..z.len())
                .map(|i| if window_finite(z, i, m) { z[i] - long.predict(&lags(z, i, m)) } else { T::nan() })
                .collect();
            let ok = |i: usize| window_finite(z, i, p) && i >= q && proxy[i - q..i].iter().all(|v| v.is_finite());
            let final_rows: Vec<usize> = rows.iter().copied().filter(|&i| ok(i)).collect();
            if final_rows.len() < needed {
                return Err(ForecastError::TooFewRows { needed, actual: final_rows.len() });
            }
            let design = final_rows.iter().map(|&i| {
                let mut x = lags(z, i, p);
                x.extend(lags(&proxy, i, q));
                (x, z[i])
            });
            let lin = ridge(design, p + q, T::zero())
                .ok_or_else(|| ForecastError::Degenerate("singular ARMA regression".into()))?;
            let mut ma = lin.coef[p..].to_vec();
            let total: T = ma.iter().map(|v| v.abs()).sum();
            let bound = T::of(MA_BOUND);
            if total > bound {
                ma.iter_mut().for_each(|v| *v = *v * bound / total);
            }
            ArimaFit { c: lin.intercept, ar: lin.coef[..p].to_vec(), ma, sigma2: T::zero() }
        };
        let resid = fit.residuals(z);
        let used: Vec<T> = ar_rows.iter().map(|&i| resid[i]).collect();
        fit.sigma2 = used.iter().map(|&e| e * e).sum::<T>() / T::of_usize(used.len());
        Ok(fit)
    }

    fn mean_at(&self, z: &[T], e: &[T], i: usize) -> T {
        let mut v = self.c;
        for (k, &phi) in self.ar.iter().enumerate() {
            v += phi * z[i - 1 - k];
        }
        for (k, &theta) in self.ma.iter().enumerate() {
            if i > k {
                v += theta * e[i - 1 - k];
            }
        }
        v
    }

    /// Conditional one-step residuals; undefined positions contribute zero.
    pub fn residuals(&self, z: &[T]) -> Vec<T> {
        let p = self.ar.len();
        let mut e = vec![T::zero(); z.len()];
        for i in 0..z.len() {
            if window_finite(z, i, p) {
                let r = z[i] - self.mean_at(z, &e, i);
                e[i] = if r.is_finite() { r } else { T::zero() };
            }
        }
        e
    }

    /// One-step prediction of the value following `z`.
    pub fn predict_next(&self, z: &[T]) -> T {
        let n = z.len();
        let e = if self.ma.is_empty() { Vec::new() } else { self.residuals(z) };
        let mut v = self.c;
        for (k, &phi) in self.ar.iter().enumerate() {
            v += phi * z[n - 1 - k];
        }
        for (k, &theta) in self.ma.iter().enumerate() {
            if n > k {
                v += theta * e[n - 1 - k];
            }
        }
        v
    }
}

fn lags<T: Scalar>(z: &[T], i: usize, count: usize) -> Vec<T> {
    (1..=count).map(|k| z[i - k]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn simulate(phi: &[f64], theta: &[f64], n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![0.0; n + 200];
        let mut e = vec![0.0; n + 200];
        for t in 8..x.len() {
            e[t] = noise.sample(&mut rng);
            x[t] = e[t]
                + phi.iter().enumerate().map(|(k, a)| a * x[t - 1 - k]).sum::<f64>()
                + theta.iter().enumerate().map(|(k, b)| b * e[t - 1 - k]).sum::<f64>();
        }
        x.split_off(200)
    }

    #[test]
    fn recovers_arma_coefficients() {
        let z = simulate(&[0.6], &[0.4], 5000, 1);
        let rows: Vec<usize> = (0..z.len()).collect();
        let fit = ArimaFit::fit(&z, &rows, 1, 1).unwrap();
        assert!((fit.ar[0] - 0.6).abs() < 0.05, "{:?}", fit.ar);
        assert!((fit.ma[0] - 0.4).abs() < 0.05, "{:?}", fit.ma);
        assert!((fit.sigma2 - 1.0).abs() < 0.1);
    }

    #[test]
    fn white_noise_fit_is_the_mean() {
        let z: Vec<f64> = (0..100).map(|i| 3.0 + if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let rows: Vec<usize> = (0..100).collect();
        let fit = ArimaFit::fit(&z, &rows, 0, 0).unwrap();
        assert!((fit.predict_next(&z) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_series_is_degenerate_for_ar() {
        let z = vec![2.0; 200];
        let rows: Vec<usize> = (0..200).collect();
        assert!(matches!(ArimaFit::fit(&z, &rows, 2, 0), Err(ForecastError::Degenerate(_))));
    }
}
