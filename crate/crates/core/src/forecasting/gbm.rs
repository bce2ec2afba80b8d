//! Squared-loss gradient boosting over depth-limited regression trees.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ForecastError;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbmParams {
    pub n_trees: usize,
    pub depth: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams { n_trees: 100, depth: 3, learning_rate: 0.1, subsample: 1.0, min_leaf: 5, seed: 0 }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: String| Err(ForecastError::InvalidHyperparameter(m));
        if self.n_trees < 1 {
            return bad("n_trees must be at least 1".into());
        }
        if !(1..=6).contains(&self.depth) {
            return bad(format!("depth {} outside [1, 6]", self.depth));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad(format!("learning_rate {} outside (0, 1]", self.learning_rate));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample {} outside (0, 1]", self.subsample));
        }
        if self.min_leaf < 1 {
            return bad("min_leaf must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node<T> {
    Leaf(T),
    Split { feature: usize, threshold: T, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> RegressionTree<T> {
    pub fn predict(&self, x: &[T]) -> T {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf(v) => return *v,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// Column-major feature storage with a per-feature sort order.
struct Columns<'a, T> {
    cols: Vec<Vec<T>>,
    order: Vec<Vec<u32>>,
    _rows: std::marker::PhantomData<&'a ()>,
}

impl<'a, T: Scalar> Columns<'a, T> {
    fn new(rows: &'a [Vec<T>], n_features: usize) -> Self {
        let cols: Vec<Vec<T>> = (0..n_features).map(|f| rows.iter().map(|r| r[f]).collect()).collect();
        let order = cols
            .iter()
            .map(|c| {
                let mut idx: Vec<u32> = (0..c.len() as u32).collect();
                idx.sort_by(|&a, &b| c[a as usize].partial_cmp(&c[b as usize]).expect("finite features"));
                idx
            })
            .collect();
        Columns { cols, order, _rows: std::marker::PhantomData }
    }
}

struct TreeBuilder<'c, 'a, T> {
    data: &'c Columns<'a, T>,
    residual: &'c [T],
    max_depth: usize,
    min_leaf: usize,
    goes_left: Vec<bool>,
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> TreeBuilder<'_, '_, T> {
    /// `sorted[f]` lists the node's rows ordered by feature `f`.
    fn grow(&mut self, sorted: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &sorted[0];
        let n = rows.len();
        let sum: T = rows.iter().map(|&r| self.residual[r as usize]).sum();
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(sum / T::of_usize(n)));
        if depth >= self.max_depth || n < 2 * self.min_leaf {
            return id;
        }
        let nf = T::of_usize(n);
        let parent = sum * sum / nf;
        let mut best: Option<(T, usize, T)> = None;
        for (f, order) in sorted.iter().enumerate() {
            let col = &self.data.cols[f];
            let mut left = T::zero();
            for k in 0..n - 1 {
                let r = order[k] as usize;
                left += self.residual[r];
                let nl = k + 1;
                if nl < self.min_leaf || n - nl < self.min_leaf {
                    continue;
                }
                let (xa, xb) = (col[r], col[order[k + 1] as usize]);
                if xa == xb {
                    continue;
                }
                let right = sum - left;
                let gain = left * left / T::of_usize(nl) + right * right / T::of_usize(n - nl) - parent;
                if best.is_none_or(|b| gain > b.0) {
                    best = Some((gain, f, (xa + xb) / T::of(2.0)));
                }
            }
        }
        let Some((gain, feature, threshold)) = best else { return id };
        if !(gain > T::epsilon() * parent.abs().max(T::epsilon())) {
            return id;
        }
        let col = &self.data.cols[feature];
        for &r in rows {
            self.goes_left[r as usize] = col[r as usize] <= threshold;
        }
        let (mut ls, mut rs) = (Vec::with_capacity(sorted.len()), Vec::with_capacity(sorted.len()));
        for order in &sorted {
            let (l, r): (Vec<u32>, Vec<u32>) = order.iter().partition(|&&r| self.goes_left[r as usize]);
            ls.push(l);
            rs.push(r);
        }
        drop(sorted);
        let left = self.grow(ls, depth + 1);
        let right = self.grow(rs, depth + 1);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

/// A fitted boosted ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbm<T> {
    pub base: T,
    pub learning_rate: T,
    pub trees: Vec<RegressionTree<T>>,
    /// Mean squared training error of the constant model followed by the value after each stage.
    pub stage_loss: Vec<T>,
    pub n_features: usize,
}

impl<T: Scalar> Gbm<T> {
    pub fn predict(&self, x: &[T]) -> T {
        self.base + self.learning_rate * self.trees.iter().map(|t| t.predict(x)).sum::<T>()
    }
}

fn mse<T: Scalar>(r: &[T]) -> T {
    r.iter().map(|&v| v * v).sum::<T>() / T::of_usize(r.len())
}

/// Fits `n_trees` stages, each a tree on the current residuals scaled by the learning rate.
pub fn fit_gbm<T: Scalar>(features: &[Vec<T>], target: &[T], params: &GbmParams) -> Result<Gbm<T>, ForecastError> {
    params.validate()?;
    if features.len() != target.len() {
        return Err(ForecastError::LengthMismatch { left: features.len(), right: target.len() });
    }
    if target.len() < 20 {
        return Err(ForecastError::TooFewRows { needed: 20, actual: target.len() });
    }
    let n_features = features[0].len();
    if features.iter().any(|r| r.len() != n_features) {
        return Err(ForecastError::InvalidInput("ragged feature matrix".into()));
    }
    if features.iter().flatten().chain(target).any(|v| !v.is_finite()) {
        return Err(ForecastError::InvalidInput("non-finite features or targets".into()));
    }
    let n = target.len();
    let base = target.iter().copied().sum::<T>() / T::of_usize(n);
    let lr = T::of(params.learning_rate);
    let columns = Columns::new(features, n_features);
    let mut residual: Vec<T> = target.iter().map(|&y| y - base).collect();
    let mut stage_loss = vec![mse(&residual)];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let take = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
    let mut in_bag = vec![true; n];

    for _ in 0..params.n_trees {
        if take < n {
            in_bag.iter_mut().for_each(|b| *b = false);
            // Floyd's algorithm for a uniform subset of size `take`.
            for j in n - take..n {
                let r = rng.random_range(0..=j);
                if in_bag[r] {
                    in_bag[j] = true;
                } else {
                    in_bag[r] = true;
                }
            }
        }
        let sorted: Vec<Vec<u32>> = columns
            .order
            .iter()
            .map(|o| o.iter().copied().filter(|&r| in_bag[r as usize]).collect())
            .collect();
        let mut builder = TreeBuilder {
            data: &columns,
            residual: &residual,
            max_depth: params.depth,
            min_leaf: params.min_leaf,
            goes_left: vec![false; n],
            nodes: Vec::new(),
        };
        builder.grow(sorted, 0);
        let tree = RegressionTree { nodes: builder.nodes };
        for (r, x) in residual.iter_mut().zip(features) {
            *r -= lr * tree.predict(x);
        }
        stage_loss.push(mse(&residual));
        trees.push(tree);
    }
    Ok(Gbm { base, learning_rate: lr, trees, stage_loss, n_features })
}
