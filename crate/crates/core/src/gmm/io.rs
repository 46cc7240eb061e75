//! LGMM model container.
//!
//! ```text
//! magic "LGMM" | version u32 | selector_len u32 | selector JSON
//! M u32 | q u32 | mode u8 (0 diagonal, 1 full)
//! weights f64*M | means f64*M*q | covariances f64*M*q (diag) or f64*M*q*q (full)
//! final_ll f64 | iterations u32 | seed u64
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2};

use super::{Covariance, FitInfo, GmmModel};
use crate::dataset::GroupSelector;
use crate::error::{Error, Result};
use crate::io_util::{put_blob, ByteReader};

pub const LGMM_MAGIC: &[u8; 4] = b"LGMM";
pub const LGMM_VERSION: u32 = 1;

fn put_f64s<'a>(buf: &mut Vec<u8>, xs: impl IntoIterator<Item = &'a f64>) {
    for x in xs {
        buf.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode_gmm(model: &GmmModel) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(LGMM_MAGIC);
    buf.extend_from_slice(&LGMM_VERSION.to_le_bytes());
    put_blob(&mut buf, &serde_json::to_vec(&model.group)?);
    buf.extend_from_slice(&(model.n_components() as u32).to_le_bytes());
    buf.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    match model.covariances() {
        Covariance::Diagonal(_) => buf.push(0),
        Covariance::Full(_) => buf.push(1),
    }
    put_f64s(&mut buf, model.weights());
    put_f64s(&mut buf, model.means());
    match model.covariances() {
        Covariance::Diagonal(v) => put_f64s(&mut buf, v),
        Covariance::Full(mats) => {
            for s in mats {
                put_f64s(&mut buf, s);
            }
        }
    }
    buf.extend_from_slice(&model.fit.final_ll.to_le_bytes());
    buf.extend_from_slice(&model.fit.iterations.to_le_bytes());
    buf.extend_from_slice(&model.fit.seed.to_le_bytes());
    Ok(buf)
}

pub fn decode_gmm(bytes: &[u8]) -> Result<GmmModel> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != LGMM_MAGIC {
        return Err(Error::format("bad magic, expected LGMM"));
    }
    let version = r.u32()?;
    if version != LGMM_VERSION {
        return Err(Error::format(format!("unsupported LGMM version {version}")));
    }
    let group: GroupSelector =
        serde_json::from_slice(r.blob()?).map_err(|e| Error::format(format!("selector blob: {e}")))?;
    let m = r.u32()? as usize;
    let q = r.u32()? as usize;
    let mode = r.u8()?;
    let weights = Array1::from(r.f64_vec(m)?);
    let means = Array2::from_shape_vec((m, q), r.f64_vec(m * q)?).expect("sized");
    let cov = match mode {
        0 => Covariance::Diagonal(Array2::from_shape_vec((m, q), r.f64_vec(m * q)?).expect("sized")),
        1 => Covariance::Full(
            (0..m)
                .map(|_| Ok(Array2::from_shape_vec((q, q), r.f64_vec(q * q)?).expect("sized")))
                .collect::<Result<_>>()?,
        ),
        other => return Err(Error::format(format!("unknown covariance mode {other}"))),
    };
    let fit = FitInfo {
        final_ll: r.f64()?,
        iterations: r.u32()?,
        seed: r.u64()?,
    };
    r.finish()?;
    let mut model = GmmModel::new(group, weights, means, cov).map_err(|e| Error::format(e.to_string()))?;
    model.fit = fit;
    Ok(model)
}

pub fn save_gmm(model: &GmmModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_gmm(model)?)?;
    Ok(())
}

pub fn load_gmm(path: impl AsRef<Path>) -> Result<GmmModel> {
    decode_gmm(&fs::read(path)?)
}

/// Writes `id, ll_<group>...` rows, one column per model.
pub fn write_loglik_csv(path: impl AsRef<Path>, ids: &[u64], x: ArrayView2<f64>, models: &[&GmmModel]) -> Result<()> {
    if ids.len() != x.nrows() {
        return Err(Error::shape(format!("{} ids for {} samples", ids.len(), x.nrows())));
    }
    let cols = models.iter().map(|m| m.log_likelihoods(x)).collect::<Result<Vec<_>>>()?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(models.iter().map(|m| format!("ll_{}", m.group.tag())));
    w.write_record(&header)?;
    for (i, id) in ids.iter().enumerate() {
        let mut rec = vec![id.to_string()];
        rec.extend(cols.iter().map(|c| format!("{:.10}", c[i])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
