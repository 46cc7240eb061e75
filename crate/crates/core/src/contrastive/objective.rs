//! Total training objective and the optimization loop.

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::{combined_contrastive_loss, ContrastiveConfig};
use crate::autoencoder::{AdamState, Autoencoder, ForwardTrace, Gradients, Real};
use crate::dataset::{make_batches, LatentDataset};
use crate::error::{Error, Result};

/// Value and upstream gradients of `lambda1 * contrastive + lambda2 * recon`.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub recon: f64,
    pub contrastive_per_axis: Vec<f64>,
    /// `sum_axis c_axis * contrastive_per_axis[axis]`.
    pub contrastive_total: f64,
    /// d total / d bottleneck.
    pub grad_bottleneck: Array2<f64>,
    /// d total / d reconstruction.
    pub grad_recon: Array2<f64>,
}

/// Reconstruction error per batch, normalized by batch size and dimension.
fn reconstruction_loss(w: ArrayView2<f64>, recon: ArrayView2<f64>, squared: bool) -> (f64, Array2<f64>) {
    let (n, d) = w.dim();
    let diff = &recon - &w;
    if squared {
        let scale = 1.0 / (n * d) as f64;
        let loss = diff.iter().map(|v| v * v).sum::<f64>() * scale;
        (loss, diff * (2.0 * scale))
    } else {
        let scale = 1.0 / (n as f64 * (d as f64).sqrt());
        let mut grad = Array2::zeros((n, d));
        let mut loss = 0.0;
        for (i, row) in diff.axis_iter(Axis(0)).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            loss += norm * scale;
            if norm > 0.0 {
                grad.row_mut(i).assign(&(&row * (scale / norm)));
            }
        }
        (loss, grad)
    }
}

/// Evaluates the full objective on a batch and returns the trace for backprop.
pub fn total_training_loss<T: Real>(
    model: &Autoencoder<T>,
    w: ArrayView2<T>,
    labels: ArrayView2<u16>,
    cfg: &ContrastiveConfig,
) -> Result<(LossBreakdown, ForwardTrace<T>)> {
    if w.nrows() < 2 {
        return Err(Error::validation("a training batch needs at least 2 records"));
    }
    cfg.validate(labels.ncols())?;
    let trace = model.forward(w)?;
    let b = trace.bottleneck().mapv(|v| v.as_f64());
    let w64 = w.mapv(|v| v.as_f64());
    let r64 = trace.reconstruction().mapv(|v| v.as_f64());

    let (recon, recon_grad) = reconstruction_loss(w64.view(), r64.view(), cfg.squared_recon);
    let (per_axis, contrastive_total, grad_bottleneck) = if cfg.lambda1 == 0.0 {
        (vec![0.0; labels.ncols()], 0.0, Array2::zeros(b.raw_dim()))
    } else {
        let terms = combined_contrastive_loss(b.view(), labels, cfg)?;
        (terms.per_axis, terms.total, terms.grad * cfg.lambda1)
    };
    let total = cfg.lambda1 * contrastive_total + cfg.lambda2 * recon;
    Ok((
        LossBreakdown {
            total,
            recon,
            contrastive_per_axis: per_axis,
            contrastive_total,
            grad_bottleneck,
            grad_recon: recon_grad * cfg.lambda2,
        },
        trace,
    ))
}

/// Loss and parameter gradients for one batch.
pub fn loss_and_gradients<T: Real>(
    model: &Autoencoder<T>,
    w: ArrayView2<T>,
    labels: ArrayView2<u16>,
    cfg: &ContrastiveConfig,
) -> Result<(LossBreakdown, Gradients<T>)> {
    let (loss, trace) = total_training_loss(model, w, labels, cfg)?;
    let gb = loss.grad_bottleneck.mapv(T::of);
    let gr = loss.grad_recon.mapv(T::of);
    let grads = model.backward(&trace, gb.view(), gr.view())?;
    Ok((loss, grads))
}

/// Forward, loss, backward and one Adam update.
pub fn training_step<T: Real>(
    model: &mut Autoencoder<T>,
    state: &mut AdamState<T>,
    w: ArrayView2<T>,
    labels: ArrayView2<u16>,
    cfg: &ContrastiveConfig,
) -> Result<LossBreakdown> {
    let (loss, grads) = loss_and_gradients(model, w, labels, cfg)?;
    if !loss.total.is_finite() {
        let term = if !loss.recon.is_finite() { "reconstruction" } else { "contrastive" };
        return Err(Error::numeric(format!("non-finite {term} loss")));
    }
    model.adam_step(&grads, state)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seed of the per-epoch shuffles.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 192,
            seed: 0,
        }
    }
}

/// One row of the loss curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossRecord {
    pub step: u64,
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub contrastive_per_axis: Vec<f64>,
}

/// Trains on an already standardized dataset. Returns the per-step loss curve.
pub fn train_autoencoder(
    model: &mut Autoencoder<f32>,
    data: &LatentDataset,
    cfg: &ContrastiveConfig,
    train: &TrainConfig,
) -> Result<Vec<LossRecord>> {
    if data.dim() != model.input_dim() {
        return Err(Error::shape(format!(
            "dataset dim {} differs from model input {}",
            data.dim(),
            model.input_dim()
        )));
    }
    cfg.validate(data.schema().n_axes())?;
    let mut state = AdamState::new(model);
    let mut curve = Vec::new();
    for epoch in 0..train.epochs {
        let batches = make_batches(data.len(), train.batch_size, train.seed, epoch as u64)?;
        for (bi, idx) in batches.iter().enumerate() {
            let w = data.vectors().select(Axis(0), idx);
            let labels = data.labels().select(Axis(0), idx);
            let loss = training_step(model, &mut state, w.view(), labels.view(), cfg).map_err(|e| match e {
                Error::Numeric(m) => Error::Numeric(format!("epoch {epoch}, batch {bi}: {m}")),
                other => other,
            })?;
            curve.push(LossRecord {
                step: state.t,
                epoch,
                total: loss.total,
                recon: loss.recon,
                contrastive_per_axis: loss.contrastive_per_axis,
            });
        }
        if let Some(last) = curve.last() {
            log::debug!("epoch {epoch}: total {:.6} recon {:.6}", last.total, last.recon);
        }
    }
    Ok(curve)
}

/// Writes `step,epoch,total,recon,contrastive_<axis>...`.
pub fn write_loss_csv(path: impl AsRef<Path>, curve: &[LossRecord], axis_names: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["step".to_string(), "epoch".into(), "total".into(), "recon".into()];
    header.extend(axis_names.iter().map(|a| format!("contrastive_{a}")));
    w.write_record(&header)?;
    for r in curve {
        let mut row = vec![r.step.to_string(), r.epoch.to_string(), r.total.to_string(), r.recon.to_string()];
        row.extend(r.contrastive_per_axis.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autoencoder::{gradient_check, AutoencoderConfig, GradCheckConfig, Layer};
    use crate::dataset::{synth_toy_dataset, DemographicSchema, Standardizer};

    fn toy_batch(n: usize, d: usize, seed: u64) -> (Array2<f64>, Array2<u16>) {
        let schema = DemographicSchema::from_pairs(&[("g", &["a", "b"]), ("r", &["x", "y"])]).unwrap();
        let (ds, _) = synth_toy_dataset(&schema, n.div_ceil(4), 2, d, 2.0, seed).unwrap();
        let idx: Vec<usize> = (0..n).map(|i| (i * 7) % ds.len()).collect();
        let ds = ds.subset(&idx).unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        (st.forward(ds.vectors_f64().view()).unwrap(), ds.labels().clone())
    }

    #[test]
    fn contrastive_off_means_reconstruction_only() {
        let (w, labels) = toy_batch(8, 6, 1);
        let m = Autoencoder::<f64>::new(AutoencoderConfig::symmetric(&[6, 4, 2])).unwrap();
        let cfg = ContrastiveConfig { lambda1: 0.0, lambda2: 3.0, ..Default::default() };
        let (loss, _) = total_training_loss(&m, w.view(), labels.view(), &cfg).unwrap();
        assert_eq!(loss.total, 3.0 * loss.recon);
        assert!(loss.grad_bottleneck.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn identity_network_reconstructs_perfectly() {
        let d = 4;
        let cfg = AutoencoderConfig { leaky_slope: 1.0, ..AutoencoderConfig::symmetric(&[d, d]) };
        let eye = || Layer { weight: Array2::<f64>::eye(d), bias: ndarray::Array1::zeros(d) };
        let m = Autoencoder::from_layers(cfg, vec![eye(), eye()]).unwrap();
        let (w, labels) = toy_batch(8, d, 2);
        let (loss, _) = total_training_loss(&m, w.view(), labels.view(), &ContrastiveConfig::default()).unwrap();
        assert_eq!(loss.recon, 0.0);
    }

    #[test]
    fn breakdown_matches_independent_recomputation() {
        let (w, labels) = toy_batch(12, 8, 3);
        let m = Autoencoder::<f64>::new(AutoencoderConfig { init_seed: 3, ..AutoencoderConfig::symmetric(&[8, 6, 3]) }).unwrap();
        let cfg = ContrastiveConfig::default();
        let (loss, trace) = total_training_loss(&m, w.view(), labels.view(), &cfg).unwrap();

        // recon: mean squared distance over the batch divided by d
        let r = trace.reconstruction();
        let mut recon = 0.0;
        for i in 0..w.nrows() {
            recon += (0..8).map(|j| (w[[i, j]] - r[[i, j]]).powi(2)).sum::<f64>();
        }
        recon /= w.nrows() as f64 * 8.0;
        let b = trace.bottleneck();
        let mut contrastive = 0.0;
        for a in 0..2 {
            let col = labels.column(a).to_vec();
            let (l, _) = super::super::lifted_structured_loss(b.view(), &super::super::build_pair_sets(&col), cfg.alpha).unwrap();
            contrastive += l;
        }
        let expect = 100.0 * contrastive + recon;
        assert!((loss.total - expect).abs() <= 1e-10 * expect.abs());
        assert!((loss.recon - recon).abs() <= 1e-12);
        let additive = cfg.lambda1 * loss.contrastive_per_axis.iter().sum::<f64>() + cfg.lambda2 * loss.recon;
        assert!((loss.total - additive).abs() <= 1e-10 * loss.total.abs());
    }

    #[test]
    fn full_step_gradient_check() {
        let (w, labels) = toy_batch(6, 6, 4);
        let m = Autoencoder::<f64>::new(AutoencoderConfig { init_seed: 8, ..AutoencoderConfig::symmetric(&[6, 5, 3]) }).unwrap();
        let cfg = ContrastiveConfig::default();
        let (_, g) = loss_and_gradients(&m, w.view(), labels.view(), &cfg).unwrap();
        let report = gradient_check(
            &m,
            &g,
            |p| Ok(total_training_loss(p, w.view(), labels.view(), &cfg)?.0.total),
            &GradCheckConfig { coords: 200, seed: 1, ..Default::default() },
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn unsquared_reconstruction_gradient() {
        let (w, labels) = toy_batch(6, 6, 5);
        let m = Autoencoder::<f64>::new(AutoencoderConfig { init_seed: 2, ..AutoencoderConfig::symmetric(&[6, 4]) }).unwrap();
        let cfg = ContrastiveConfig { squared_recon: false, ..Default::default() };
        let (_, g) = loss_and_gradients(&m, w.view(), labels.view(), &cfg).unwrap();
        let report = gradient_check(
            &m,
            &g,
            |p| Ok(total_training_loss(p, w.view(), labels.view(), &cfg)?.0.total),
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn training_is_deterministic_and_reduces_reconstruction() {
        let schema = DemographicSchema::from_pairs(&[("g", &["a", "b"])]).unwrap();
        let (ds, _) = synth_toy_dataset(&schema, 40, 2, 6, 2.0, 9).unwrap();
        let st = Standardizer::fit(&ds).unwrap();
        let data = st.apply(&ds, crate::dataset::Direction::Forward).unwrap();
        let cfg = ContrastiveConfig { lambda1: 0.0, lambda2: 1.0, ..Default::default() };
        let ae_cfg = AutoencoderConfig { leaky_slope: 1.0, init_seed: 4, learning_rate: 1e-2, ..AutoencoderConfig::symmetric(&[6, 3]) };
        let train = TrainConfig { epochs: 100, batch_size: 16, seed: 2 };
        let mut a = Autoencoder::<f32>::new(ae_cfg.clone()).unwrap();
        let mut b = Autoencoder::<f32>::new(ae_cfg).unwrap();
        let ca = train_autoencoder(&mut a, &data, &cfg, &train).unwrap();
        let cb = train_autoencoder(&mut b, &data, &cfg, &train).unwrap();
        assert_eq!(ca, cb);
        assert_eq!(a, b);
        assert!(ca.len() >= 500);
        assert!(ca[499].recon < ca[0].recon);
    }

    #[test]
    fn batch_of_one_rejected() {
        let m = Autoencoder::<f64>::new(AutoencoderConfig::symmetric(&[2, 1])).unwrap();
        let w = Array2::zeros((1, 2));
        let l = Array2::zeros((1, 1));
        assert!(total_training_loss(&m, w.view(), l.view(), &ContrastiveConfig::default()).is_err());
    }

    #[test]
    fn loss_csv_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("loss.csv");
        let curve = vec![LossRecord { step: 1, epoch: 0, total: 2.5, recon: 0.5, contrastive_per_axis: vec![0.01, 0.01] }];
        write_loss_csv(&p, &curve, &["gender".into(), "race".into()]).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().next().unwrap(), "step,epoch,total,recon,contrastive_gender,contrastive_race");
        assert_eq!(text.lines().count(), 2);
    }
}
