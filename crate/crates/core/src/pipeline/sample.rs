//! Group-conditional sampling and the raw handoff format for an external generator.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Array3, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::autoencoder::Autoencoder;
use crate::dataset::{DemographicSchema, LatentDataset};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;

/// Draws `n` bottleneck codes from `gmm`, decodes them and maps them back to
/// raw latent space through the model's stored standardizer.
pub fn sample_latents(model: &Autoencoder<f32>, gmm: &GmmModel, n: usize, seed: u64) -> Result<Array2<f64>> {
    if gmm.dim() != model.bottleneck_dim() {
        return Err(Error::shape(format!(
            "mixture dim {} differs from bottleneck dim {}",
            gmm.dim(),
            model.bottleneck_dim()
        )));
    }
    if n == 0 {
        return Err(Error::validation("sample count must be >= 1"));
    }
    let b = gmm.sample(n, seed);
    model.decode_raw(b.view())
}

/// Samples `n` latents for the mixture's group and labels them.
///
/// Labels use `schema.with_unknown_values()`: constrained axes carry the
/// selector's value, every other axis carries the reserved trailing value.
pub fn run_sample_group(
    model: &Autoencoder<f32>,
    gmm: &GmmModel,
    schema: &DemographicSchema,
    n: usize,
    seed: u64,
) -> Result<LatentDataset> {
    let clauses = gmm.group.resolve(schema)?;
    let w = sample_latents(model, gmm, n, seed)?;
    let mut row: Vec<u16> = schema.axes.iter().map(|a| a.values.len() as u16).collect();
    for (a, v) in clauses {
        row[a] = v;
    }
    let labels = Array2::from_shape_fn((n, row.len()), |(_, a)| row[a]);
    LatentDataset::new(schema.with_unknown_values(), (0..n as u64).collect(), w.mapv(|v| v as f32), labels)
}

/// JSON sidecar describing a handoff array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HandoffSidecar {
    /// `[n, styles, width]`
    pub shape: [usize; 3],
    pub dtype: String,
    pub byte_order: String,
    /// Row-major ("C") element order.
    pub order: String,
    pub data_file: String,
}

pub fn handoff_sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `latents` as little-endian `f32` reshaped to `n x styles x width`,
/// plus a sidecar next to it. Returns the sidecar path.
pub fn emit_generator_handoff(latents: ArrayView2<f32>, path: impl AsRef<Path>, styles: usize) -> Result<PathBuf> {
    let path = path.as_ref();
    let (n, d) = latents.dim();
    if styles == 0 || d % styles != 0 {
        return Err(Error::validation(format!("latent dim {d} is not divisible by {styles} styles")));
    }
    if path.extension().is_some_and(|e| e == "json") {
        return Err(Error::validation("handoff data file cannot use the .json extension"));
    }
    let mut buf = Vec::with_capacity(n * d * 4);
    for v in latents.iter() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    let sidecar = HandoffSidecar {
        shape: [n, styles, d / styles],
        dtype: "float32".into(),
        byte_order: "little".into(),
        order: "C".into(),
        data_file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let side = handoff_sidecar_path(path);
    let mut text = serde_json::to_string_pretty(&sidecar)?;
    text.push('\n');
    fs::write(&side, text)?;
    Ok(side)
}

pub fn read_generator_handoff(path: impl AsRef<Path>) -> Result<(Array3<f32>, HandoffSidecar)> {
    let path = path.as_ref();
    let sidecar: HandoffSidecar = serde_json::from_slice(&fs::read(handoff_sidecar_path(path))?)?;
    if sidecar.dtype != "float32" || sidecar.byte_order != "little" || sidecar.order != "C" {
        return Err(Error::format(format!("unsupported handoff layout {sidecar:?}")));
    }
    let bytes = fs::read(path)?;
    let [n, s, w] = sidecar.shape;
    if bytes.len() != n * s * w * 4 {
        return Err(Error::format(format!(
            "{}: {} bytes, sidecar shape needs {}",
            path.display(),
            bytes.len(),
            n * s * w * 4
        )));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let arr = Array3::from_shape_vec((n, s, w), data).map_err(|e| Error::format(e.to_string()))?;
    Ok((arr, sidecar))
}
