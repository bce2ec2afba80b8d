//! Target transforms applied before a base model sees a series.
//!
//! Transformed arrays keep the indexing of the raw series; the first
//! `diff_order` entries are undefined and never used as targets.

use serde::{Deserialize, Serialize};

use crate::scalar::{mean, std_pop, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    #[default]
    None,
    #[serde(rename = "difference-order-1")]
    DifferenceOrder1,
    Standardize,
}

/// Standardization (optional) followed by differencing of a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedTransform<T> {
    pub scale: Option<(T, T)>,
    pub diff_order: usize,
}

impl<T: Scalar> FittedTransform<T> {
    pub fn identity() -> Self {
        FittedTransform { scale: None, diff_order: 0 }
    }

    /// Learns statistics from `train` and composes `extra_diff` further differences
    /// (an ARIMA model's integration order).
    pub fn fit(kind: TransformKind, train: &[T], extra_diff: usize) -> Self {
        let scale = match kind {
            TransformKind::Standardize => {
                let s = std_pop(train);
                Some((mean(train), if s > T::zero() { s } else { T::one() }))
            }
            _ => None,
        };
        let base = usize::from(kind == TransformKind::DifferenceOrder1);
        FittedTransform { scale, diff_order: base + extra_diff }
    }

    fn scaled(&self, v: T) -> T {
        match self.scale {
            Some((m, s)) => (v - m) / s,
            None => v,
        }
    }

    fn unscaled(&self, v: T) -> T {
        match self.scale {
            Some((m, s)) => v * s + m,
            None => v,
        }
    }

    pub fn forward(&self, raw: &[T]) -> Vec<T> {
        let mut z: Vec<T> = raw.iter().map(|&v| self.scaled(v)).collect();
        for level in 1..=self.diff_order {
            // Walk backwards so each entry still sees its undifferenced predecessor.
            for i in (level..z.len()).rev() {
                z[i] = z[i] - z[i - 1];
            }
            if let Some(slot) = z.get_mut(level - 1) {
                *slot = T::nan();
            }
        }
        z
    }

    /// Raw value following `raw_history` given the transformed prediction `z_next`.
    pub fn inverse_next(&self, raw_history: &[T], z_next: T) -> T {
        let k = self.diff_order;
        if k == 0 {
            return self.unscaled(z_next);
        }
        let n = raw_history.len();
        debug_assert!(n >= k);
        let mut tail: Vec<T> = raw_history[n - k..].iter().map(|&v| self.scaled(v)).collect();
        // Last value of each differencing level, level 0 first.
        let mut lasts = Vec::with_capacity(k);
        for _ in 0..k {
            lasts.push(*tail.last().expect("non-empty"));
            tail = tail.windows(2).map(|w| w[1] - w[0]).collect();
        }
        let mut next = z_next;
        for last in lasts.into_iter().rev() {
            next = last + next;
        }
        self.unscaled(next)
    }
}
