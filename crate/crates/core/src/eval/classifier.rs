use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SoftmaxConfig {
    pub epochs: usize,
    /// Initial step size; halved whenever a step would raise the loss.
    pub learning_rate: f64,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self { epochs: 500, learning_rate: 1.0 }
    }
}

/// Multinomial logistic regression for one demographic axis. Inputs are
/// standardized with statistics of the training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxClassifier {
    pub axis: String,
    pub n_classes: usize,
    /// `(q + 1) x k`, last row is the bias.
    pub weights: Array2<f64>,
    pub feature_mean: Array1<f64>,
    pub feature_scale: Array1<f64>,
    pub final_loss: f64,
    pub final_learning_rate: f64,
}

fn augment(x: ArrayView2<f64>, mean: &Array1<f64>, scale: &Array1<f64>) -> Array2<f64> {
    let (n, q) = x.dim();
    let mut out = Array2::ones((n, q + 1));
    let mut body = out.slice_mut(ndarray::s![.., ..q]);
    body.assign(&x);
    body -= mean;
    body /= scale;
    out
}

/// Mean cross-entropy and row-wise softmax probabilities.
fn loss_and_probs(xa: &Array2<f64>, w: &Array2<f64>, labels: &[u16]) -> (f64, Array2<f64>) {
    let mut p = xa.dot(w);
    let mut loss = 0.0;
    for (i, mut row) in p.outer_iter_mut().enumerate() {
        let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let target = row[labels[i] as usize] - m;
        row.mapv_inplace(|v| (v - m).exp());
        let z = row.sum();
        loss += z.ln() - target;
        row /= z;
    }
    (loss / xa.nrows() as f64, p)
}

/// Full-batch gradient descent on cross-entropy from zero weights.
pub fn train_softmax_classifier(
    x: ArrayView2<f64>,
    labels: &[u16],
    n_classes: usize,
    axis: &str,
    cfg: &SoftmaxConfig,
) -> Result<SoftmaxClassifier> {
    let (n, q) = x.dim();
    if labels.len() != n {
        return Err(Error::shape(format!("{} labels for {n} samples", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
        return Err(Error::validation(format!("label {bad} out of range for {n_classes} classes")));
    }
    let mut present = vec![false; n_classes];
    for &l in labels {
        present[l as usize] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::validation(format!("axis {axis}: classifier needs at least two classes present")));
    }
    if cfg.learning_rate.is_nan() || cfg.learning_rate <= 0.0 {
        return Err(Error::Config("classifier learning rate must be > 0".into()));
    }
    let mean = x.mean_axis(Axis(0)).unwrap();
    let scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    let xa = augment(x, &mean, &scale);

    let mut w = Array2::zeros((q + 1, n_classes));
    let mut lr = cfg.learning_rate;
    let (mut loss, mut probs) = loss_and_probs(&xa, &w, labels);
    for _ in 0..cfg.epochs {
        let mut resid = probs.clone();
        for (i, &l) in labels.iter().enumerate() {
            resid[[i, l as usize]] -= 1.0;
        }
        let grad = xa.t().dot(&resid) / n as f64;
        // backtrack until the step does not raise the loss
        loop {
            let cand = &w - &(&grad * lr);
            let (cl, cp) = loss_and_probs(&xa, &cand, labels);
            if cl <= loss {
                w = cand;
                loss = cl;
                probs = cp;
                break;
            }
            lr *= 0.5;
            if lr < 1e-12 {
                break;
            }
        }
        if lr < 1e-12 {
            break;
        }
    }
    Ok(SoftmaxClassifier {
        axis: axis.to_string(),
        n_classes,
        weights: w,
        feature_mean: mean,
        feature_scale: scale,
        final_loss: loss,
        final_learning_rate: lr,
    })
}

impl SoftmaxClassifier {
    pub fn logits(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.feature_mean.len() {
            return Err(Error::shape(format!(
                "classifier expects dimension {}, got {}",
                self.feature_mean.len(),
                x.ncols()
            )));
        }
        Ok(augment(x, &self.feature_mean, &self.feature_scale).dot(&self.weights))
    }

    /// Argmax of logits, ties to the lowest class index.
    pub fn classify_batch(&self, x: ArrayView2<f64>) -> Result<Vec<u16>> {
        let logits = self.logits(x)?;
        Ok(logits
            .outer_iter()
            .map(|row| {
                let mut best = 0;
                for k in 1..row.len() {
                    if row[k] > row[best] {
                        best = k;
                    }
                }
                best as u16
            })
            .collect())
    }

    pub fn confusion_matrix(&self, x: ArrayView2<f64>, truth: &[u16], class_names: &[String]) -> Result<ConfusionMatrix> {
        let pred = self.classify_batch(x)?;
        ConfusionMatrix::from_predictions(&self.axis, class_names, truth, &pred)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub axis: String,
    pub classes: Vec<String>,
    /// `counts[true][predicted]`.
    pub counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn from_predictions(axis: &str, classes: &[String], truth: &[u16], pred: &[u16]) -> Result<Self> {
        if truth.len() != pred.len() {
            return Err(Error::shape(format!("{} true labels for {} predictions", truth.len(), pred.len())));
        }
        let k = classes.len();
        let mut counts = Array2::zeros((k, k));
        for (&t, &p) in truth.iter().zip(pred) {
            if t as usize >= k || p as usize >= k {
                return Err(Error::validation(format!("label ({t}, {p}) outside {k} classes")));
            }
            counts[[t as usize, p as usize]] += 1;
        }
        Ok(Self { axis: axis.to_string(), classes: classes.to_vec(), counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// Per-class recall; `None` for classes with no true samples.
    pub fn recall(&self) -> Vec<Option<f64>> {
        self.counts
            .outer_iter()
            .enumerate()
            .map(|(i, row)| {
                let t = row.sum();
                (t > 0).then(|| row[i] as f64 / t as f64)
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            return 0.0;
        }
        self.counts.diag().sum() as f64 / total as f64
    }
}
