//! Multi-fidelity ensemble surrogate.
//!
//! Measurements are grouped by resource level. One forest is fitted per
//! group on standardized losses, each forest is scored by how well its
//! predicted ordering agrees with the observed ordering of the
//! full-resource group, and the scores are sharpened into weights. The
//! weighted forests are fused as a generalized product of experts: the
//! fused precision is the weighted sum of the base precisions, and the
//! fused mean is the precision-weighted mean.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{ForestParams, ForestSurrogate, Prediction};
use crate::space::{Configuration, ConfigurationSpace};

/// All measurements taken at one resource level.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityGroup {
    resource: f64,
    measurements: Vec<(Configuration, f64)>,
    mean: f64,
    std: f64,
}

impl FidelityGroup {
    pub fn new(resource: f64) -> Self {
        Self {
            resource,
            measurements: Vec::new(),
            mean: 0.0,
            std: 0.0,
        }
    }

    pub fn resource(&self) -> f64 {
        self.resource
    }

    /// Adds a measurement. Non-finite losses mark failed evaluations; they
    /// are kept for accounting but excluded from statistics and training.
    pub fn push(&mut self, config: Configuration, loss: f64) {
        self.measurements.push((config, loss));
        self.refresh_stats();
    }

    fn refresh_stats(&mut self) {
        let ys: Vec<f64> = self.finite_losses().collect();
        if ys.is_empty() {
            self.mean = 0.0;
            self.std = 0.0;
            return;
        }
        let n = ys.len() as f64;
        self.mean = ys.iter().sum::<f64>() / n;
        self.std = (ys.iter().map(|y| (y - self.mean).powi(2)).sum::<f64>() / n).sqrt();
    }

    pub fn measurements(&self) -> &[(Configuration, f64)] {
        &self.measurements
    }

    pub fn len(&self) -> usize {
        self.measurements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.measurements.is_empty()
    }

    fn finite_losses(&self) -> impl Iterator<Item = f64> + '_ {
        self.measurements.iter().map(|m| m.1).filter(|y| y.is_finite())
    }

    /// Number of successful (finite-loss) measurements.
    pub fn n_finite(&self) -> usize {
        self.finite_losses().count()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Population standard deviation of the finite losses.
    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn z_score(&self, loss: f64) -> f64 {
        if self.std > 0.0 {
            (loss - self.mean) / self.std
        } else {
            0.0
        }
    }

    /// Lowest finite loss; the earliest measurement wins ties.
    pub fn best(&self) -> Option<(&Configuration, f64)> {
        let mut best: Option<(&Configuration, f64)> = None;
        for (c, y) in &self.measurements {
            if y.is_finite() && best.is_none_or(|(_, b)| *y < b) {
                best = Some((c, *y));
            }
        }
        best
    }

    /// Encoded configurations paired with z-scored losses.
    pub fn standardize(&self, space: &ConfigurationSpace) -> Result<Vec<(Vec<f64>, f64)>> {
        let n = self.n_finite();
        if n == 0 {
            return Err(Error::InsufficientData { needed: 1, got: 0 });
        }
        self.measurements
            .iter()
            .filter(|m| m.1.is_finite())
            .map(|(c, y)| Ok((space.encode(c)?, self.z_score(*y))))
            .collect()
    }
}

/// Counts ordered pairs `(j, k)` where `predicted[j] < predicted[k]` and
/// `observed[j] < observed[k]` disagree. Both orders of every pair are
/// visited and ties compare as "not less".
pub fn misranked_pairs(predicted: &[f64], observed: &[f64]) -> u64 {
    debug_assert_eq!(predicted.len(), observed.len());
    let n = predicted.len();
    let mut loss = 0;
    for j in 0..n {
        for k in 0..n {
            if (predicted[j] < predicted[k]) ^ (observed[j] < observed[k]) {
                loss += 1;
            }
        }
    }
    loss
}

/// Ranking loss of a fitted surrogate on the top-fidelity data.
pub fn ranking_loss(surrogate: &ForestSurrogate, top: &[(Vec<f64>, f64)]) -> Result<u64> {
    if top.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: top.len(),
        });
    }
    let predicted = top
        .iter()
        .map(|(x, _)| surrogate.predict(x).map(|p| p.mean))
        .collect::<Result<Vec<_>>>()?;
    let observed: Vec<f64> = top.iter().map(|(_, y)| *y).collect();
    Ok(misranked_pairs(&predicted, &observed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CvLoss {
    pub loss: u64,
    /// Number of held-out folds, each with its own refit.
    pub refits: usize,
}

const CV_FOLDS: usize = 5;

/// Out-of-sample ranking loss for the surrogate trained on the top group
/// itself: leave-one-out up to five points, five-fold beyond that.
///
/// A training split with a single point predicts that point's target.
pub fn cv_ranking_loss<R: Rng + ?Sized>(
    data: &[(Vec<f64>, f64)],
    params: &ForestParams,
    rng: &mut R,
) -> Result<CvLoss> {
    let n = data.len();
    if n < 2 {
        return Err(Error::InsufficientData { needed: 2, got: n });
    }
    let folds: Vec<Vec<usize>> = if n <= CV_FOLDS {
        (0..n).map(|i| vec![i]).collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut folds = vec![Vec::new(); CV_FOLDS];
        for (pos, i) in order.into_iter().enumerate() {
            folds[pos % CV_FOLDS].push(i);
        }
        if folds.iter().any(|f| n - f.len() < 2) {
            (0..n).map(|i| vec![i]).collect()
        } else {
            folds
        }
    };

    let mut predicted = vec![0.0; n];
    let mut held_out = vec![false; n];
    for fold in &folds {
        for &i in fold {
            held_out[i] = true;
        }
        let train: Vec<(Vec<f64>, f64)> = data
            .iter()
            .enumerate()
            .filter(|(i, _)| !held_out[*i])
            .map(|(_, d)| d.clone())
            .collect();
        if train.len() >= 2 {
            let model = ForestSurrogate::fit(&train, params, rng)?;
            for &i in fold {
                predicted[i] = model.predict(&data[i].0)?.mean;
            }
        } else {
            for &i in fold {
                predicted[i] = train[0].1;
            }
        }
        for &i in fold {
            held_out[i] = false;
        }
    }
    let observed: Vec<f64> = data.iter().map(|(_, y)| *y).collect();
    Ok(CvLoss {
        loss: misranked_pairs(&predicted, &observed),
        refits: folds.len(),
    })
}

/// Fraction of order-preserving ordered pairs among the `n_k(n_k - 1)`
/// off-diagonal pairs of the top group.
pub fn order_preserving_fraction(loss: u64, n_k: usize) -> f64 {
    let pairs = (n_k * (n_k - 1)) as f64;
    (1.0 - loss as f64 / pairs).clamp(0.0, 1.0)
}

/// `w_i = p_i^theta / sum_k p_k^theta`; uniform when every `p_i` is zero.
pub fn discriminate(fractions: &[f64], theta: u32) -> Vec<f64> {
    let powered: Vec<f64> = fractions.iter().map(|p| p.powi(theta as i32)).collect();
    let total: f64 = powered.iter().sum();
    if total > 0.0 {
        powered.iter().map(|p| p / total).collect()
    } else {
        vec![1.0 / fractions.len() as f64; fractions.len()]
    }
}

/// Ranking losses to weights, for bases that were all scored on a top
/// group of `n_k` measurements.
pub fn compute_weights(losses: &[u64], n_k: usize, theta: u32) -> Vec<f64> {
    let fractions: Vec<f64> = losses
        .iter()
        .map(|&l| order_preserving_fraction(l, n_k))
        .collect();
    discriminate(&fractions, theta)
}

/// Fuses Gaussian predictions; zero-weight entries are skipped entirely.
pub fn gpoe_predict(predictions: &[Prediction], weights: &[f64]) -> Result<Prediction> {
    if predictions.len() != weights.len() {
        return Err(Error::Domain(format!(
            "{} predictions but {} weights",
            predictions.len(),
            weights.len()
        )));
    }
    let mut precision = 0.0;
    let mut weighted_mean = 0.0;
    for (p, &w) in predictions.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let inv = w / p.variance;
        precision += inv;
        weighted_mean += p.mean * inv;
    }
    if precision <= 0.0 {
        return Err(Error::DegenerateEnsemble);
    }
    let variance = 1.0 / precision;
    Ok(Prediction::new(weighted_mean * variance, variance))
}

/// How base surrogates are weighted. Only `RankingLoss` is the full method;
/// the others exist for ablation studies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    RankingLoss,
    /// Equal weight for every available base.
    Uniform,
    /// All weight on the base with the highest order-preserving fraction.
    SingleBest,
    /// Only the full-resource surrogate.
    TopFidelityOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleParams {
    pub theta: u32,
    pub k_full_threshold: usize,
    pub weighting: Weighting,
}

impl Default for EnsembleParams {
    fn default() -> Self {
        Self {
            theta: 3,
            k_full_threshold: 50,
            weighting: Weighting::RankingLoss,
        }
    }
}

impl EnsembleParams {
    pub fn validate(&self) -> Result<()> {
        if self.theta == 0 {
            return Err(Error::invalid("theta", "must be a positive integer"));
        }
        if self.k_full_threshold == 0 {
            return Err(Error::invalid("k_full_threshold", "must be a positive integer"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct BaseSurrogate {
    pub resource: f64,
    pub surrogate: Option<ForestSurrogate>,
}

/// Weighted collection of per-fidelity forests.
#[derive(Debug, Clone)]
pub struct EnsembleSurrogate {
    bases: Vec<BaseSurrogate>,
    weights: Vec<f64>,
    fractions: Vec<Option<f64>>,
    safeguard: bool,
}

impl EnsembleSurrogate {
    pub fn bases(&self) -> &[BaseSurrogate] {
        &self.bases
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Order-preserving fraction per base; `None` where it was not computed.
    pub fn fractions(&self) -> &[Option<f64>] {
        &self.fractions
    }

    /// Whether the full-resource base took all the weight because the top
    /// group reached the threshold.
    pub fn safeguard_fired(&self) -> bool {
        self.safeguard
    }

    pub fn resources(&self) -> Vec<f64> {
        self.bases.iter().map(|b| b.resource).collect()
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let mut preds = Vec::with_capacity(self.bases.len());
        let mut ws = Vec::with_capacity(self.bases.len());
        for (b, &w) in self.bases.iter().zip(&self.weights) {
            if let (Some(s), true) = (&b.surrogate, w > 0.0) {
                preds.push(s.predict(x)?);
                ws.push(w);
            }
        }
        gpoe_predict(&preds, &ws)
    }
}

/// Fits one forest per group (ascending resource order, last group is the
/// full-resource one) and weights them. Returns `Ok(None)` when no group has
/// enough data for a surrogate.
pub fn build_ensemble<R: Rng + ?Sized>(
    groups: &[FidelityGroup],
    space: &ConfigurationSpace,
    forest: &ForestParams,
    params: &EnsembleParams,
    rng: &mut R,
) -> Result<Option<EnsembleSurrogate>> {
    params.validate()?;
    let k = groups.len();
    if k == 0 {
        return Ok(None);
    }
    let top_only = params.weighting == Weighting::TopFidelityOnly;

    let mut bases = Vec::with_capacity(k);
    let mut top_data = None;
    for (i, g) in groups.iter().enumerate() {
        let trainable = g.n_finite() >= 2 && (!top_only || i == k - 1);
        let surrogate = if trainable {
            let data = g.standardize(space)?;
            let model = ForestSurrogate::fit(&data, forest, rng)?;
            if i == k - 1 {
                top_data = Some(data);
            }
            Some(model)
        } else {
            None
        };
        bases.push(BaseSurrogate {
            resource: g.resource(),
            surrogate,
        });
    }
    let available: Vec<bool> = bases.iter().map(|b| b.surrogate.is_some()).collect();
    if !available.iter().any(|a| *a) {
        return Ok(None);
    }

    let mut fractions = vec![None; k];
    if let Some(top) = &top_data {
        let n_k = top.len();
        for i in 0..k {
            let Some(model) = &bases[i].surrogate else {
                continue;
            };
            let loss = if i == k - 1 {
                cv_ranking_loss(top, forest, rng)?.loss
            } else {
                ranking_loss(model, top)?
            };
            fractions[i] = Some(order_preserving_fraction(loss, n_k));
        }
    }

    let uniform = |available: &[bool]| -> Vec<f64> {
        let m = available.iter().filter(|a| **a).count() as f64;
        available.iter().map(|&a| if a { 1.0 / m } else { 0.0 }).collect()
    };
    let one_hot = |at: usize| -> Vec<f64> { (0..k).map(|i| if i == at { 1.0 } else { 0.0 }).collect() };

    let scored = top_data.is_some();
    let mut weights = match params.weighting {
        Weighting::RankingLoss if scored => {
            let idx: Vec<usize> = (0..k).filter(|&i| available[i]).collect();
            let ps: Vec<f64> = idx.iter().map(|&i| fractions[i].unwrap_or(0.0)).collect();
            let mut w = vec![0.0; k];
            for (&i, wi) in idx.iter().zip(discriminate(&ps, params.theta)) {
                w[i] = wi;
            }
            w
        }
        Weighting::RankingLoss | Weighting::Uniform => uniform(&available),
        Weighting::SingleBest => {
            // highest fraction; ties and the unscored case favour higher fidelity
            let mut best = None;
            for i in (0..k).rev().filter(|&i| available[i]) {
                let p = fractions[i].unwrap_or(f64::NEG_INFINITY);
                if best.is_none_or(|(_, bp)| p > bp) {
                    best = Some((i, p));
                }
            }
            one_hot(best.map(|b| b.0).unwrap_or(k - 1))
        }
        Weighting::TopFidelityOnly => one_hot(k - 1),
    };

    let n_top = groups[k - 1].n_finite();
    let safeguard = available[k - 1] && n_top >= params.k_full_threshold;
    if safeguard {
        weights = one_hot(k - 1);
    }

    Ok(Some(EnsembleSurrogate {
        bases,
        weights,
        fractions,
        safeguard,
    }))
}

/// Incumbent loss in the ensemble's standardized units: the lowest finite
/// loss of the highest-resource group that has one, z-scored by that
/// group's own statistics.
pub fn standardized_incumbent(groups: &[FidelityGroup]) -> Option<f64> {
    groups
        .iter()
        .rev()
        .find_map(|g| g.best().map(|(_, y)| g.z_score(y)))
}
