use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::kmeans::kmeanspp_indices;
use super::{responsibilities_from, Covariance, CovarianceMode, FitInfo, GmmModel};
use crate::dataset::{select_group, GroupSelector, LatentDataset};
use crate::error::{Error, Result};

/// Components whose responsibility mass falls below this are re-seeded.
const EMPTY_MASS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Number of mixture components `M`.
    pub components: usize,
    pub max_iters: usize,
    /// Relative mean-LL improvement below which EM stops.
    pub tol: f64,
    /// Variance floor.
    pub floor: f64,
    pub covariance: CovarianceMode,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            components: 1000,
            max_iters: 200,
            tol: 1e-6,
            floor: 1e-6,
            covariance: CovarianceMode::Diagonal,
            seed: 0,
            restarts: 1,
        }
    }
}

impl EmConfig {
    /// `min(1000, n / 20)`, at least 1.
    pub fn desk_scale_components(n: usize) -> usize {
        (n / 20).clamp(1, 1000)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("EM needs at least one component".into()));
        }
        if self.floor.is_nan() || self.floor <= 0.0 {
            return Err(Error::Config(format!("covariance floor must be > 0, got {}", self.floor)));
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tolerance must be > 0, got {}", self.tol)));
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be >= 1".into()));
        }
        Ok(())
    }
}

struct Params {
    weights: Array1<f64>,
    means: Array2<f64>,
    cov: Covariance,
}

fn global_variance(x: ArrayView2<f64>, floor: f64) -> Array1<f64> {
    x.var_axis(Axis(0), 0.0).mapv(|v| v.max(floor))
}

/// Weighted MLE given responsibilities. `badness` ranks points for
/// re-seeding empty components (highest first).
fn m_step(x: ArrayView2<f64>, resp: &Array2<f64>, badness: &[f64], mode: CovarianceMode, floor: f64) -> Params {
    let (n, q) = x.dim();
    let m = resp.ncols();
    let nk = resp.sum_axis(Axis(0));
    let mut means = resp.t().dot(&x);
    let mut weights = Array1::zeros(m);
    let mut empty = Vec::new();
    for k in 0..m {
        if nk[k] < EMPTY_MASS {
            empty.push(k);
        } else {
            means.row_mut(k).mapv_inplace(|v| v / nk[k]);
            weights[k] = nk[k] / n as f64;
        }
    }

    let mut var_diag = Array2::zeros((m, q));
    let mut var_full = vec![Array2::zeros((q, q)); m];
    for k in (0..m).filter(|k| !empty.contains(k)) {
        let mut xc = x.to_owned();
        xc -= &means.row(k);
        match mode {
            CovarianceMode::Diagonal => {
                for j in 0..q {
                    let s: f64 = xc.column(j).iter().zip(resp.column(k)).map(|(d, r)| r * d * d).sum();
                    var_diag[[k, j]] = (s / nk[k]).max(floor);
                }
            }
            CovarianceMode::Full => {
                let weighted = &xc * &resp.column(k).insert_axis(Axis(1));
                let s = xc.t().dot(&weighted) / nk[k];
                var_full[k] = clip_eigenvalues(&s, floor);
            }
        }
    }

    if !empty.is_empty() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| badness[b].total_cmp(&badness[a]).then(a.cmp(&b)));
        let gv = global_variance(x, floor);
        for (slot, &k) in empty.iter().enumerate() {
            let i = order[slot % n];
            warn!("EM component {k} lost all responsibility mass; re-seeding at sample {i}");
            means.row_mut(k).assign(&x.row(i));
            weights[k] = 1.0 / n as f64;
            var_diag.row_mut(k).assign(&gv);
            var_full[k] = Array2::from_diag(&gv);
        }
        let total = weights.sum();
        weights /= total;
    }

    let cov = match mode {
        CovarianceMode::Diagonal => Covariance::Diagonal(var_diag),
        CovarianceMode::Full => Covariance::Full(var_full),
    };
    Params { weights, means, cov }
}

/// Projects a symmetric matrix onto `{S : eigenvalues >= floor}`.
fn clip_eigenvalues(s: &Array2<f64>, floor: f64) -> Array2<f64> {
    let q = s.nrows();
    let sym = DMatrix::from_fn(q, q, |i, j| 0.5 * (s[[i, j]] + s[[j, i]]));
    let eig = SymmetricEigen::new(sym);
    let lambda = eig.eigenvalues.map(|v| v.max(floor));
    let v = &eig.eigenvectors;
    let out = v * DMatrix::from_diagonal(&lambda) * v.transpose();
    Array2::from_shape_fn((q, q), |(i, j)| 0.5 * (out[(i, j)] + out[(j, i)]))
}

fn build(group: &GroupSelector, p: Params) -> Result<GmmModel> {
    GmmModel::new(group.clone(), p.weights, p.means, p.cov).map_err(|e| Error::numeric(format!("EM produced an invalid model: {e}")))
}

fn fit_once(x: ArrayView2<f64>, cfg: &EmConfig, seed: u64) -> Result<(GmmModel, Vec<f64>)> {
    let (n, _) = x.dim();
    let m = cfg.components;
    let centers = kmeanspp_indices(x, m, seed)?;

    // hard assignment to the nearest seed, ties to the lowest index
    let mut resp = Array2::zeros((n, m));
    let mut nearest = vec![0.0; n];
    for (i, row) in x.outer_iter().enumerate() {
        let (best, d) = centers
            .iter()
            .enumerate()
            .map(|(k, &c)| (k, row.iter().zip(x.row(c)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()))
            .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
        resp[[i, best]] = 1.0;
        nearest[i] = d;
    }
    let mut params = m_step(x, &resp, &nearest, cfg.covariance, cfg.floor);

    let mut history: Vec<f64> = Vec::new();
    let mut it = 0;
    let model = loop {
        let model = build(&GroupSelector::all(), params)?;
        let (resp, ll) = responsibilities_from(model.weighted_log_densities(x)?);
        let mean_ll = ll.mean().unwrap();
        if !mean_ll.is_finite() {
            return Err(Error::numeric(format!("EM log-likelihood became {mean_ll} at iteration {it}")));
        }
        if let Some(&prev) = history.last() {
            let converged = (mean_ll - prev).abs() < cfg.tol * prev.abs().max(f64::MIN_POSITIVE);
            history.push(mean_ll);
            if converged {
                break model;
            }
        } else {
            history.push(mean_ll);
        }
        if it == cfg.max_iters {
            debug!("EM hit max_iters={} without converging", cfg.max_iters);
            break model;
        }
        let badness: Vec<f64> = ll.iter().map(|v| -v).collect();
        params = m_step(x, &resp, &badness, cfg.covariance, cfg.floor);
        it += 1;
    };
    Ok((model, history))
}

/// Fits a mixture by EM with k-means++ initialization; keeps the restart
/// with the highest final mean log-likelihood.
pub fn em_fit(x: ArrayView2<f64>, cfg: &EmConfig) -> Result<(GmmModel, Vec<f64>)> {
    cfg.validate()?;
    if x.nrows() < cfg.components {
        return Err(Error::validation(format!(
            "{} samples cannot fit {} components",
            x.nrows(),
            cfg.components
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("EM input contains non-finite values"));
    }
    let mut best: Option<(GmmModel, Vec<f64>, u64)> = None;
    for r in 0..cfg.restarts {
        let seed = cfg.seed.wrapping_add(r as u64);
        let (model, hist) = fit_once(x, cfg, seed)?;
        let better = best.as_ref().is_none_or(|(_, h, _)| hist.last() > h.last());
        if better {
            best = Some((model, hist, seed));
        }
    }
    let (mut model, hist, seed) = best.unwrap();
    model.fit = FitInfo {
        final_ll: *hist.last().unwrap(),
        iterations: (hist.len() - 1) as u32,
        seed,
    };
    Ok((model, hist))
}

/// Fits the mixture for one group of an encoded dataset.
pub fn fit_group_gmm(codes: &LatentDataset, sel: &GroupSelector, cfg: &EmConfig) -> Result<(GmmModel, Vec<f64>)> {
    let sub = select_group(codes, sel)?;
    let n = sub.len();
    let m = cfg.components;
    if n < 5 * m {
        return Err(Error::validation(format!(
            "group {sel} has {n} samples, need at least 5M = {}",
            5 * m
        )));
    }
    if n < 20 * m {
        warn!("group {sel} has {n} samples, fewer than 20M = {}", 20 * m);
    }
    let (mut model, hist) = em_fit(sub.vectors_f64().view(), cfg)?;
    model.group = sel.clone();
    Ok((model, hist))
}
