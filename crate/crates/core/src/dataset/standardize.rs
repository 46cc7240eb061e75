use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::LatentDataset;
use crate::error::{Error, Result};

/// Smallest admissible per-dimension scale.
pub const SCALE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Per-dimension affine normalization `(x - mean) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// Fits mean and population standard deviation per dimension.
    pub fn fit(ds: &LatentDataset) -> Result<Self> {
        Self::fit_matrix(ds.vectors_f64().view())
    }

    pub fn fit_matrix(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::validation("cannot fit a standardizer on zero rows"));
        }
        let mean = x.mean_axis(Axis(0)).expect("nonempty");
        let var = x.var_axis(Axis(0), 0.0);
        let mut scale = Vec::with_capacity(var.len());
        for (j, v) in var.iter().enumerate() {
            let s = v.sqrt();
            if s < SCALE_FLOOR {
                log::warn!("dimension {j} has (near) zero variance; scale clamped to {SCALE_FLOOR}");
                scale.push(SCALE_FLOOR);
            } else {
                scale.push(s);
            }
        }
        Ok(Self {
            mean: mean.to_vec(),
            scale,
        })
    }

    /// Identity transform for a given dimension (standardization disabled).
    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, cols: usize) -> Result<()> {
        if cols != self.dim() {
            return Err(Error::shape(format!("standardizer has dim {}, data has {cols}", self.dim())));
        }
        Ok(())
    }

    pub fn transform(&self, x: ArrayView2<f64>, direction: Direction) -> Result<Array2<f64>> {
        self.check(x.ncols())?;
        let mean = Array1::from(self.mean.clone());
        let scale = Array1::from(self.scale.clone());
        Ok(match direction {
            Direction::Forward => (&x - &mean) / &scale,
            Direction::Inverse => &x * &scale + &mean,
        })
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.transform(x, Direction::Forward)
    }

    pub fn inverse(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.transform(x, Direction::Inverse)
    }

    /// Dataset-level transform. Results are rounded to the dataset's `f32`
    /// storage; use [`Standardizer::transform`] for full precision.
    pub fn apply(&self, ds: &LatentDataset, direction: Direction) -> Result<LatentDataset> {
        let out = self.transform(ds.vectors_f64().view(), direction)?;
        ds.with_vectors(out.mapv(|v| v as f32))
    }
}
