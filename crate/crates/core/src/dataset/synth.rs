//! Synthetic labeled latents with a known generative process.
//!
//! Each full group combination owns a Gaussian in an `s`-dimensional semantic
//! space. Axis `a` is carried by semantic coordinate `a`, whose group mean is
//! the value index centered and scaled by `separation`; the remaining
//! coordinates are nuisance factors shared by every group, with much larger
//! spread than the demographic coordinates. Semantic draws are
//! lifted to `d` dimensions by an orthonormal `d x s` map `Q` and entangled
//! with `w = x + 0.5 * tanh(R x)` where `R` is a random `d x d` rotation. The
//! entangling map has Jacobian `I + 0.5 * diag(1 - tanh^2) R`, which is
//! never singular, so no label information is lost.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DemographicSchema, LatentDataset};
use crate::error::{Error, Result};

/// Gain of the `tanh` entangling term.
pub const ENTANGLE_GAIN: f64 = 0.5;

/// Shape of the semantic Gaussians beyond the group means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyOptions {
    /// Within-group variance of each demographic coordinate.
    pub axis_var: f64,
    /// Range of nuisance standard deviations, drawn log-uniformly per coordinate.
    pub nuisance_std: (f64, f64),
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            axis_var: 0.5,
            nuisance_std: (6.0, 12.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupGaussian {
    pub labels: Vec<u16>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Parameters of the generating process, kept for oracle checks.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGroundTruth {
    pub groups: Vec<GroupGaussian>,
    /// `d x s`, orthonormal columns.
    pub mixing: Array2<f64>,
    /// `d x d` rotation used inside the `tanh`.
    pub entangle: Array2<f64>,
    pub nonlinearity: String,
    pub seed: u64,
}

impl ToyGroundTruth {
    pub fn sem_dim(&self) -> usize {
        self.mixing.ncols()
    }

    /// Maps one semantic vector to latent space.
    pub fn map(&self, z: &Array1<f64>) -> Array1<f64> {
        let x = self.mixing.dot(z);
        let rx = self.entangle.dot(&x);
        &x + &rx.mapv(|v| ENTANGLE_GAIN * v.tanh())
    }
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let g = DMatrix::<f64>::from_fn(rows, cols, |_, _| rng.sample(StandardNormal));
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    // fix column signs so Q is unique for a given Gaussian draw
    Array2::from_shape_fn((rows, cols), |(i, j)| {
        let s = if r[(j, j)] < 0.0 { -1.0 } else { 1.0 };
        s * q[(i, j)]
    })
}

/// Generates `n_per_group` records for every full group combination.
pub fn synth_toy_dataset(
    schema: &DemographicSchema,
    n_per_group: usize,
    sem_dim: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> Result<(LatentDataset, ToyGroundTruth)> {
    synth_toy_dataset_with(schema, n_per_group, sem_dim, dim, separation, seed, &ToyOptions::default())
}

pub fn synth_toy_dataset_with(
    schema: &DemographicSchema,
    n_per_group: usize,
    sem_dim: usize,
    dim: usize,
    separation: f64,
    seed: u64,
    opts: &ToyOptions,
) -> Result<(LatentDataset, ToyGroundTruth)> {
    schema.validate()?;
    if sem_dim < 2 || sem_dim < schema.n_axes() {
        return Err(Error::validation(format!(
            "semantic dim {sem_dim} must be >= 2 and >= number of axes ({})",
            schema.n_axes()
        )));
    }
    if dim < sem_dim {
        return Err(Error::validation(format!("dim {dim} must be >= semantic dim {sem_dim}")));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(Error::validation(format!("separation must be finite and >= 0, got {separation}")));
    }
    if n_per_group == 0 {
        return Err(Error::validation("n_per_group must be positive"));
    }
    let (lo, hi) = opts.nuisance_std;
    if !(opts.axis_var > 0.0 && opts.axis_var.is_finite() && lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(Error::validation(format!(
            "toy options need axis_var > 0 and 0 < nuisance_std.0 <= nuisance_std.1, got {opts:?}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mixing = random_orthonormal(dim, sem_dim, &mut rng);
    let entangle = random_orthonormal(dim, dim, &mut rng);

    let mut var = vec![opts.axis_var; sem_dim];
    for v in var.iter_mut().skip(schema.n_axes()) {
        let std = (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp();
        *v = std * std;
    }

    let groups: Vec<GroupGaussian> = (0..schema.n_combinations())
        .map(|c| {
            let labels = schema.combination(c);
            let mut mean = vec![0.0; sem_dim];
            for (a, &l) in labels.iter().enumerate() {
                let k = schema.axes[a].values.len() as f64;
                mean[a] = (l as f64 - (k - 1.0) / 2.0) * separation;
            }
            GroupGaussian {
                labels,
                mean,
                var: var.clone(),
            }
        })
        .collect();

    let truth = ToyGroundTruth {
        groups,
        mixing,
        entangle,
        nonlinearity: "tanh".to_string(),
        seed,
    };

    let n = n_per_group * truth.groups.len();
    let mut vectors = Array2::<f32>::zeros((n, dim));
    let mut labels = Array2::<u16>::zeros((n, schema.n_axes()));
    let mut row = 0;
    for g in &truth.groups {
        for _ in 0..n_per_group {
            let z = Array1::from_shape_fn(sem_dim, |k| {
                let e: f64 = rng.sample(StandardNormal);
                g.mean[k] + g.var[k].sqrt() * e
            });
            let w = truth.map(&z);
            vectors.row_mut(row).assign(&w.mapv(|x| x as f32));
            for (a, &l) in g.labels.iter().enumerate() {
                labels[[row, a]] = l;
            }
            row += 1;
        }
    }
    let ids = (0..n as u64).collect();
    let ds = LatentDataset::new(schema.clone(), ids, vectors, labels)?;
    Ok((ds, truth))
}
