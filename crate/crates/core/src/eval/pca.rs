use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    pub coords: Array2<f64>,
    /// `k x q`, one principal direction per row.
    pub components: Array2<f64>,
    pub mean: Array1<f64>,
    /// Eigenvalues of the sample covariance, all of them, descending.
    pub eigenvalues: Vec<f64>,
    /// Fraction of total variance for each kept component.
    pub explained: Vec<f64>,
}

/// Projects centered data onto its top `out_dim` principal directions. Each
/// direction is signed so its largest-magnitude loading is positive.
pub fn pca_project(x: ArrayView2<f64>, out_dim: usize) -> Result<PcaProjection> {
    let (n, q) = x.dim();
    if n < 2 {
        return Err(Error::validation(format!("PCA needs at least 2 samples, got {n}")));
    }
    if out_dim == 0 || out_dim > q {
        return Err(Error::validation(format!("cannot project {q}-dimensional data to {out_dim} dimensions")));
    }
    let mean = x.mean_axis(Axis(0)).unwrap();
    let xc = &x - &mean;
    let cov = xc.t().dot(&xc) / (n - 1) as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(q, q, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let total: f64 = eigenvalues.iter().sum();
    if total.is_nan() || total <= 0.0 {
        return Err(Error::validation("PCA of rank-0 data"));
    }
    let mut components = Array2::zeros((out_dim, q));
    for (r, &i) in order.iter().take(out_dim).enumerate() {
        let col = eig.eigenvectors.column(i);
        let mut lead = 0;
        for j in 1..q {
            if col[j].abs() > col[lead].abs() {
                lead = j;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..q {
            components[[r, j]] = sign * col[j];
        }
    }
    let coords = xc.dot(&components.t());
    let explained = eigenvalues.iter().take(out_dim).map(|l| l / total).collect();
    Ok(PcaProjection { coords, components, mean, eigenvalues, explained })
}
