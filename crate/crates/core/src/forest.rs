//! Probabilistic random forest in the SMAC style.
//!
//! Each tree is grown on a bootstrap resample with a random feature subset
//! per node. The predictive distribution at `x` is Gaussian with the mean
//! of the per-tree leaf means and their between-tree variance, floored at
//! `variance_floor` so downstream precision weights stay finite.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub max_features_ratio: f64,
    pub bootstrap: bool,
    pub variance_floor: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 10,
            min_samples_leaf: 3,
            max_features_ratio: 5.0 / 6.0,
            bootstrap: true,
            variance_floor: 1e-10,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::invalid("forest.n_trees", "must be positive"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid("forest.min_samples_leaf", "must be positive"));
        }
        if !(self.max_features_ratio > 0.0 && self.max_features_ratio <= 1.0) {
            return Err(Error::invalid("forest.max_features_ratio", "must lie in (0, 1]"));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::invalid("forest.variance_floor", "must be a small positive number"));
        }
        Ok(())
    }
}

/// Gaussian predictive distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

impl Prediction {
    pub fn new(mean: f64, variance: f64) -> Self {
        Self { mean, variance }
    }

    /// Combines per-tree leaf means: their average, and their population
    /// variance floored at `floor`.
    pub fn from_tree_means(means: &[f64], floor: f64) -> Self {
        let n = means.len() as f64;
        let mean = means.iter().sum::<f64>() / n;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            variance: var.max(floor),
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    cost: f64,
}

struct TreeBuilder<'a, R: Rng + ?Sized> {
    xs: &'a [&'a [f64]],
    ys: &'a [f64],
    params: &'a ForestParams,
    n_sub: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng + ?Sized> TreeBuilder<'_, R> {
    fn grow(&mut self, rows: Vec<usize>) -> usize {
        let id = self.nodes.len();
        let mean = rows.iter().map(|&i| self.ys[i]).sum::<f64>() / rows.len() as f64;
        self.nodes.push(Node::Leaf(mean));

        let pure = rows.iter().all(|&i| self.ys[i] == self.ys[rows[0]]);
        if pure || rows.len() < 2 * self.params.min_samples_leaf {
            return id;
        }

        let width = self.xs[0].len();
        let mut subset = index::sample(self.rng, width, self.n_sub).into_vec();
        subset.sort_unstable();
        let mut best = self.best_split(&rows, &subset);
        if best.is_none() && self.n_sub < width {
            let rest: Vec<usize> = (0..width).filter(|f| !subset.contains(f)).collect();
            best = self.best_split(&rows, &rest);
        }
        let Some(split) = best else {
            return id;
        };

        let (l, r): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&i| self.xs[i][split.feature] <= split.threshold);
        let left = self.grow(l);
        let right = self.grow(r);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    /// Minimum summed squared error split over `features`; ties keep the
    /// lowest feature index and then the lowest threshold.
    fn best_split(&self, rows: &[usize], features: &[usize]) -> Option<Split> {
        let min_leaf = self.params.min_samples_leaf;
        let n = rows.len();
        let mut best: Option<Split> = None;
        let mut order = rows.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.xs[a][f].total_cmp(&self.xs[b][f]));
            let total: f64 = order.iter().map(|&i| self.ys[i]).sum();
            let total_sq: f64 = order.iter().map(|&i| self.ys[i] * self.ys[i]).sum();
            let (mut s, mut sq) = (0.0, 0.0);
            for k in 0..n - 1 {
                let y = self.ys[order[k]];
                s += y;
                sq += y * y;
                let nl = k + 1;
                let nr = n - nl;
                let (lo, hi) = (self.xs[order[k]][f], self.xs[order[k + 1]][f]);
                if nl < min_leaf || nr < min_leaf || lo == hi {
                    continue;
                }
                let cost = (sq - s * s / nl as f64)
                    + ((total_sq - sq) - (total - s).powi(2) / nr as f64);
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    best = Some(Split {
                        feature: f,
                        threshold: lo + (hi - lo) / 2.0,
                        cost,
                    });
                }
            }
        }
        best
    }
}

/// A fitted random-forest regressor with Gaussian predictions.
#[derive(Debug, Clone)]
pub struct ForestSurrogate {
    params: ForestParams,
    trees: Vec<Tree>,
    width: usize,
    train_count: usize,
}

impl ForestSurrogate {
    /// Fits the forest on `(vector, target)` pairs. Deterministic given `rng`.
    pub fn fit<R: Rng + ?Sized>(
        data: &[(Vec<f64>, f64)],
        params: &ForestParams,
        rng: &mut R,
    ) -> Result<Self> {
        params.validate()?;
        if data.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: data.len(),
            });
        }
        let width = data[0].0.len();
        if width == 0 || data.iter().any(|(x, _)| x.len() != width) {
            return Err(Error::Domain("training vectors must share a non-zero width".into()));
        }
        if data.iter().any(|(_, y)| !y.is_finite()) {
            return Err(Error::Domain("training targets must be finite".into()));
        }
        let n_sub = ((params.max_features_ratio * width as f64).ceil() as usize).clamp(1, width);
        let n = data.len();
        let mut trees = Vec::with_capacity(params.n_trees);
        for _ in 0..params.n_trees {
            let sample: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let xs: Vec<&[f64]> = sample.iter().map(|&i| data[i].0.as_slice()).collect();
            let ys: Vec<f64> = sample.iter().map(|&i| data[i].1).collect();
            let mut builder = TreeBuilder {
                xs: &xs,
                ys: &ys,
                params,
                n_sub,
                rng: &mut *rng,
                nodes: Vec::new(),
            };
            builder.grow((0..n).collect());
            trees.push(Tree {
                nodes: builder.nodes,
            });
        }
        Ok(Self {
            params: params.clone(),
            trees,
            width,
            train_count: n,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.width {
            return Err(Error::Domain(format!(
                "input width {} does not match training width {}",
                x.len(),
                self.width
            )));
        }
        let means: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        Ok(Prediction::from_tree_means(&means, self.params.variance_floor))
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn train_count(&self) -> usize {
        self.train_count
    }

    pub fn width(&self) -> usize {
        self.width
    }
}
