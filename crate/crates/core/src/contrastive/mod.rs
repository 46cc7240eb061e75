//! Lifted-structured contrastive loss on bottleneck codes.
//!
//! For a batch with positive pairs `P` (same label) and negative pairs `N`
//! (different label), with Euclidean distances `l`:
//!
//! ```text
//! L_ij = log( sum_{(i,k) in N} exp(a - l_ik) + sum_{(j,k) in N} exp(a - l_jk) ) + l_ij
//! L    = 1 / (2 |P|) * sum_{(i,j) in P} max(0, L_ij)^2
//! ```
//!
//! The two inner sums only depend on one endpoint each, so they are reduced
//! once per point as `s_i = logsumexp_k (a - l_ik)` and combined per pair
//! with `logaddexp(s_i, s_j)`. This keeps the cost at `O(n^2)` per axis.

mod objective;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use objective::{
    loss_and_gradients, total_training_loss, train_autoencoder, training_step, write_loss_csv, LossBreakdown, LossRecord, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContrastiveConfig {
    /// Negative margin.
    pub alpha: f64,
    /// Per-axis importance weights; empty means 1 for every axis.
    pub axis_weights: Vec<f64>,
    /// Weight of the contrastive term.
    pub lambda1: f64,
    /// Weight of the reconstruction term.
    pub lambda2: f64,
    /// Squared Euclidean reconstruction error (default) or plain Euclidean.
    pub squared_recon: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            axis_weights: Vec::new(),
            lambda1: 100.0,
            lambda2: 1.0,
            squared_recon: true,
        }
    }
}

impl ContrastiveConfig {
    pub fn validate(&self, n_axes: usize) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.axis_weights.is_empty() && self.axis_weights.len() != n_axes {
            return Err(Error::Config(format!(
                "{} axis weights given for {n_axes} axes",
                self.axis_weights.len()
            )));
        }
        if self.axis_weights.iter().any(|&c| !(c >= 0.0 && c.is_finite())) {
            return Err(Error::Config("axis weights must be finite and >= 0".into()));
        }
        let ok = |x: f64| x >= 0.0 && x.is_finite();
        if !ok(self.lambda1) || !ok(self.lambda2) || (self.lambda1 == 0.0 && self.lambda2 == 0.0) {
            return Err(Error::Config("lambda1 and lambda2 must be >= 0 and not both zero".into()));
        }
        Ok(())
    }

    pub fn axis_weight(&self, axis: usize) -> f64 {
        self.axis_weights.get(axis).copied().unwrap_or(1.0)
    }
}

/// Positive and negative index pairs of one batch on one axis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairSets {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<(usize, usize)>,
}

/// Every unordered pair `(i, j)`, `i < j`, in lexicographic order, split by
/// whether the labels agree.
pub fn build_pair_sets(labels: &[u16]) -> PairSets {
    let mut positives = Vec::new();
    let mut negatives = Vec::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            if labels[i] == labels[j] {
                positives.push((i, j));
            } else {
                negatives.push((i, j));
            }
        }
    }
    PairSets { positives, negatives }
}

/// Pairwise Euclidean distances between rows.
pub fn pairwise_distances(x: ArrayView2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in i + 1..n {
            let mut s = 0.0;
            for (a, b) in x.row(i).iter().zip(x.row(j).iter()) {
                s += (a - b) * (a - b);
            }
            let v = s.sqrt();
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Lifted-structured loss and its gradient with respect to the codes.
pub fn lifted_structured_loss(b: ArrayView2<f64>, pairs: &PairSets, alpha: f64) -> Result<(f64, Array2<f64>)> {
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite embedding passed to the contrastive loss"));
    }
    let dist = pairwise_distances(b);
    Ok(lifted_with_distances(b, &dist, pairs, alpha))
}

pub(crate) fn lifted_with_distances(b: ArrayView2<f64>, dist: &Array2<f64>, pairs: &PairSets, alpha: f64) -> (f64, Array2<f64>) {
    let n = b.nrows();
    let mut grad = Array2::zeros(b.raw_dim());
    if pairs.positives.is_empty() || pairs.negatives.is_empty() {
        return (0.0, grad);
    }

    let mut neg: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(i, k) in &pairs.negatives {
        neg[i].push(k);
        neg[k].push(i);
    }
    // s_i = log sum_k exp(alpha - l_ik) with a max shift
    let lse: Vec<f64> = (0..n)
        .map(|i| {
            if neg[i].is_empty() {
                return f64::NEG_INFINITY;
            }
            let m = neg[i].iter().map(|&k| alpha - dist[[i, k]]).fold(f64::NEG_INFINITY, f64::max);
            m + neg[i].iter().map(|&k| (alpha - dist[[i, k]] - m).exp()).sum::<f64>().ln()
        })
        .collect();

    let n_pos = pairs.positives.len() as f64;
    let mut loss = 0.0;
    // d loss / d l_ab accumulated per pair, plus per-point mass on its negatives
    let mut d_dist = Array2::<f64>::zeros((n, n));
    let mut neg_mass = vec![0.0; n];
    for &(i, j) in &pairs.positives {
        let joint = log_add_exp(lse[i], lse[j]);
        if joint == f64::NEG_INFINITY {
            continue;
        }
        let l = joint + dist[[i, j]];
        if l <= 0.0 {
            continue;
        }
        loss += l * l;
        let coef = l / n_pos;
        d_dist[[i, j]] += coef;
        neg_mass[i] += coef * (lse[i] - joint).exp();
        neg_mass[j] += coef * (lse[j] - joint).exp();
    }
    loss /= 2.0 * n_pos;

    for i in 0..n {
        if neg_mass[i] == 0.0 {
            continue;
        }
        for &k in &neg[i] {
            let p = (alpha - dist[[i, k]] - lse[i]).exp();
            d_dist[[i, k]] -= neg_mass[i] * p;
        }
    }

    for i in 0..n {
        for j in 0..n {
            let c = d_dist[[i, j]];
            let l = dist[[i, j]];
            if c == 0.0 || l == 0.0 {
                continue;
            }
            let s = c / l;
            for t in 0..b.ncols() {
                let diff = s * (b[[i, t]] - b[[j, t]]);
                grad[[i, t]] += diff;
                grad[[j, t]] -= diff;
            }
        }
    }
    (loss, grad)
}

/// Per-axis lifted losses combined with the axis weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveTerms {
    pub per_axis: Vec<f64>,
    /// `sum_axis c_axis * per_axis[axis]`.
    pub total: f64,
    /// Gradient of `total` with respect to the codes.
    pub grad: Array2<f64>,
}

pub fn combined_contrastive_loss(
    b: ArrayView2<f64>,
    labels: ArrayView2<u16>,
    cfg: &ContrastiveConfig,
) -> Result<ContrastiveTerms> {
    if labels.nrows() != b.nrows() {
        return Err(Error::shape(format!("{} label rows for {} codes", labels.nrows(), b.nrows())));
    }
    if labels.ncols() == 0 {
        return Err(Error::validation("contrastive loss needs at least one axis"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite embedding passed to the contrastive loss"));
    }
    let dist = pairwise_distances(b);
    let mut per_axis = Vec::with_capacity(labels.ncols());
    let mut total = 0.0;
    let mut grad = Array2::zeros(b.raw_dim());
    for a in 0..labels.ncols() {
        let axis_labels = labels.column(a).to_vec();
        let pairs = build_pair_sets(&axis_labels);
        let (l, g) = lifted_with_distances(b, &dist, &pairs, cfg.alpha);
        let c = cfg.axis_weight(a);
        per_axis.push(l);
        total += c * l;
        if c != 0.0 {
            grad.scaled_add(c, &g);
        }
    }
    Ok(ContrastiveTerms { per_axis, total, grad })
}
