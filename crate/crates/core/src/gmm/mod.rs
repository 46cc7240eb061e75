//! Gaussian mixtures over bottleneck codes: density evaluation, sampling and
//! EM fitting.

mod em;
mod io;
mod kmeans;

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupSelector;
use crate::error::{Error, Result};

pub use em::{em_fit, fit_group_gmm, EmConfig};
pub use io::{decode_gmm, encode_gmm, load_gmm, save_gmm, write_loglik_csv, LGMM_MAGIC, LGMM_VERSION};
pub use kmeans::kmeanspp_init;

/// Largest bottleneck width for which full covariances are allowed.
pub const MAX_FULL_COV_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceMode {
    #[default]
    Diagonal,
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Covariance {
    /// `M x q` variances.
    Diagonal(Array2<f64>),
    /// `M` SPD matrices of size `q x q`.
    Full(Vec<Array2<f64>>),
}

impl Covariance {
    pub fn mode(&self) -> CovarianceMode {
        match self {
            Covariance::Diagonal(_) => CovarianceMode::Diagonal,
            Covariance::Full(_) => CovarianceMode::Full,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    /// Mean per-sample log-likelihood at the final iteration.
    pub final_ll: f64,
    pub iterations: u32,
    pub seed: u64,
}

/// Per-component factor used to evaluate densities.
#[derive(Debug, Clone, PartialEq)]
enum Factor {
    /// `1 / sigma^2` per dimension.
    Diag(Array1<f64>),
    /// Lower Cholesky factor.
    Chol(Array2<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub group: GroupSelector,
    weights: Array1<f64>,
    means: Array2<f64>,
    covariances: Covariance,
    pub fit: FitInfo,
    factors: Vec<Factor>,
    /// `log w_m - q/2 log 2pi - 1/2 log det Sigma_m`.
    log_norm: Vec<f64>,
}

/// Lower Cholesky factor via nalgebra, `None` if not positive definite.
fn cholesky(s: &Array2<f64>) -> Option<Array2<f64>> {
    let q = s.nrows();
    let m = DMatrix::from_fn(q, q, |i, j| s[[i, j]]);
    let l = m.cholesky()?.l();
    Some(Array2::from_shape_fn((q, q), |(i, j)| l[(i, j)]))
}

impl GmmModel {
    /// Validates parameters and precomputes per-component factors.
    pub fn new(group: GroupSelector, weights: Array1<f64>, means: Array2<f64>, covariances: Covariance) -> Result<Self> {
        let (m, q) = means.dim();
        if m == 0 || q == 0 {
            return Err(Error::validation("mixture needs at least one component and dimension"));
        }
        if weights.len() != m {
            return Err(Error::shape(format!("{} weights for {m} components", weights.len())));
        }
        if weights.iter().any(|&w| !(w >= 0.0 && w.is_finite())) {
            return Err(Error::validation("mixture weights must be finite and >= 0"));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("mixture weights sum to {total}, expected 1")));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("mixture means must be finite"));
        }
        let half_log_2pi = 0.5 * q as f64 * (2.0 * PI).ln();
        let mut factors = Vec::with_capacity(m);
        let mut log_norm = Vec::with_capacity(m);
        match &covariances {
            Covariance::Diagonal(var) => {
                if var.dim() != (m, q) {
                    return Err(Error::shape(format!("diagonal covariances are {:?}, expected ({m}, {q})", var.dim())));
                }
                for (k, row) in var.outer_iter().enumerate() {
                    if row.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                        return Err(Error::validation(format!("component {k} has a non-positive variance")));
                    }
                    let log_det: f64 = row.iter().map(|v| v.ln()).sum();
                    factors.push(Factor::Diag(row.mapv(|v| 1.0 / v)));
                    log_norm.push(weights[k].ln() - half_log_2pi - 0.5 * log_det);
                }
            }
            Covariance::Full(mats) => {
                if q > MAX_FULL_COV_DIM {
                    return Err(Error::validation(format!(
                        "full covariances are limited to dimension {MAX_FULL_COV_DIM}, got {q}"
                    )));
                }
                if mats.len() != m {
                    return Err(Error::shape(format!("{} covariance matrices for {m} components", mats.len())));
                }
                for (k, s) in mats.iter().enumerate() {
                    if s.dim() != (q, q) {
                        return Err(Error::shape(format!("covariance {k} is {:?}, expected ({q}, {q})", s.dim())));
                    }
                    let l = cholesky(s)
                        .ok_or_else(|| Error::validation(format!("covariance {k} is not positive definite")))?;
                    let log_det: f64 = 2.0 * l.diag().iter().map(|v| v.ln()).sum::<f64>();
                    factors.push(Factor::Chol(l));
                    log_norm.push(weights[k].ln() - half_log_2pi - 0.5 * log_det);
                }
            }
        }
        Ok(Self {
            group,
            weights,
            means,
            covariances,
            fit: FitInfo::default(),
            factors,
            log_norm,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn covariances(&self) -> &Covariance {
        &self.covariances
    }

    /// `log w_m + log N(x | mu_m, Sigma_m)` for one component.
    fn weighted_log_density(&self, k: usize, x: ArrayView1<f64>) -> f64 {
        let mu = self.means.row(k);
        let quad = match &self.factors[k] {
            Factor::Diag(prec) => x
                .iter()
                .zip(mu.iter())
                .zip(prec.iter())
                .map(|((a, m), p)| (a - m) * (a - m) * p)
                .sum::<f64>(),
            Factor::Chol(l) => {
                // forward substitution L y = x - mu
                let q = mu.len();
                let mut y = vec![0.0; q];
                for i in 0..q {
                    let mut s = x[i] - mu[i];
                    for j in 0..i {
                        s -= l[[i, j]] * y[j];
                    }
                    y[i] = s / l[[i, i]];
                }
                y.iter().map(|v| v * v).sum()
            }
        };
        self.log_norm[k] - 0.5 * quad
    }

    fn check_dim(&self, q: usize) -> Result<()> {
        if q != self.dim() {
            return Err(Error::shape(format!("model dimension {} differs from data dimension {q}", self.dim())));
        }
        Ok(())
    }

    /// `n x M` matrix of `log w_m + log N(x_i | m)`.
    pub fn weighted_log_densities(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_dim(x.ncols())?;
        let m = self.n_components();
        let rows: Vec<Vec<f64>> = (0..x.nrows())
            .into_par_iter()
            .map(|i| (0..m).map(|k| self.weighted_log_density(k, x.row(i))).collect())
            .collect();
        Ok(Array2::from_shape_fn((x.nrows(), m), |(i, k)| rows[i][k]))
    }

    pub fn log_likelihood(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        let terms: Vec<f64> = (0..self.n_components()).map(|k| self.weighted_log_density(k, x)).collect();
        Ok(log_sum_exp(&terms))
    }

    /// Per-sample log-likelihoods.
    pub fn log_likelihoods(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        let dens = self.weighted_log_densities(x)?;
        Ok(dens.outer_iter().map(|r| log_sum_exp(r.as_slice().unwrap())).collect())
    }

    pub fn mean_log_likelihood(&self, x: ArrayView2<f64>) -> Result<f64> {
        if x.nrows() == 0 {
            return Err(Error::validation("mean log-likelihood of zero samples"));
        }
        Ok(self.log_likelihoods(x)?.mean().unwrap())
    }

    /// Posterior component probabilities, normalized in the log domain.
    pub fn responsibilities(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(responsibilities_from(self.weighted_log_densities(x)?).0)
    }

    /// Draws `n` samples: a component by weight, then a Gaussian draw.
    pub fn sample(&self, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = self.dim();
        let mut cdf = Vec::with_capacity(self.n_components());
        let mut acc = 0.0;
        for &w in &self.weights {
            acc += w;
            cdf.push(acc);
        }
        let mut out = Array2::zeros((n, q));
        for mut row in out.outer_iter_mut() {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf
                .iter()
                .position(|&c| u < c)
                .unwrap_or_else(|| self.weights.iter().rposition(|&w| w > 0.0).unwrap());
            let z: Vec<f64> = (0..q).map(|_| rng.sample(StandardNormal)).collect();
            let mu = self.means.row(k);
            match &self.covariances {
                Covariance::Diagonal(var) => {
                    for j in 0..q {
                        row[j] = mu[j] + var[[k, j]].sqrt() * z[j];
                    }
                }
                Covariance::Full(_) => {
                    let Factor::Chol(l) = &self.factors[k] else { unreachable!() };
                    for i in 0..q {
                        row[i] = mu[i] + (0..=i).map(|j| l[[i, j]] * z[j]).sum::<f64>();
                    }
                }
            }
        }
        out
    }
}

pub fn e_step_responsibilities(model: &GmmModel, x: ArrayView2<f64>) -> Result<Array2<f64>> {
    model.responsibilities(x)
}

pub fn gmm_sample(model: &GmmModel, n: usize, seed: u64) -> Array2<f64> {
    model.sample(n, seed)
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Row-normalizes weighted log densities. Returns responsibilities and
/// per-row log-likelihoods.
pub(crate) fn responsibilities_from(mut dens: Array2<f64>) -> (Array2<f64>, Array1<f64>) {
    let mut ll = Array1::zeros(dens.nrows());
    for (i, mut row) in dens.outer_iter_mut().enumerate() {
        let l = log_sum_exp(row.as_slice().unwrap());
        ll[i] = l;
        row.mapv_inplace(|v| (v - l).exp());
    }
    (dens, ll)
}
