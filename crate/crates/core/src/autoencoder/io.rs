//! LMAE model container.
//!
//! ```text
//! magic "LMAE" | version u32 | config_len u32 | config JSON
//! per layer: weight f32 (fan_in x fan_out, row-major), bias f32 (fan_out)
//! standardizer_dim u32 (0 = none) | mean f64 * dim | scale f64 * dim
//! ```

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Autoencoder, AutoencoderConfig, Layer};
use crate::dataset::Standardizer;
use crate::error::{Error, Result};
use crate::io_util::{put_blob, ByteReader};

pub const LMAE_MAGIC: &[u8; 4] = b"LMAE";
pub const LMAE_VERSION: u32 = 1;

pub fn encode_model(model: &Autoencoder<f32>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(LMAE_MAGIC);
    buf.extend_from_slice(&LMAE_VERSION.to_le_bytes());
    put_blob(&mut buf, &serde_json::to_vec(&model.config)?);
    for layer in &model.layers {
        for x in layer.weight.iter().chain(layer.bias.iter()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    match &model.standardizer {
        None => buf.extend_from_slice(&0u32.to_le_bytes()),
        Some(st) => {
            buf.extend_from_slice(&(st.dim() as u32).to_le_bytes());
            for x in st.mean.iter().chain(&st.scale) {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

pub fn decode_model(bytes: &[u8]) -> Result<Autoencoder<f32>> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != LMAE_MAGIC {
        return Err(Error::format("bad magic, expected LMAE"));
    }
    let version = r.u32()?;
    if version != LMAE_VERSION {
        return Err(Error::format(format!("unsupported LMAE version {version}")));
    }
    let config: AutoencoderConfig =
        serde_json::from_slice(r.blob()?).map_err(|e| Error::format(format!("config blob: {e}")))?;
    config.validate().map_err(|e| Error::format(e.to_string()))?;
    let mut layers = Vec::new();
    for (fan_in, fan_out) in config.layer_shapes() {
        let weight = Array2::from_shape_vec((fan_in, fan_out), r.f32_vec(fan_in * fan_out)?).expect("sized");
        let bias = Array1::from(r.f32_vec(fan_out)?);
        layers.push(Layer { weight, bias });
    }
    let st_dim = r.u32()? as usize;
    let standardizer = if st_dim == 0 {
        None
    } else {
        if st_dim != config.input_dim() {
            return Err(Error::format(format!(
                "standardizer dim {st_dim} differs from model input {}",
                config.input_dim()
            )));
        }
        let mean = r.f64_vec(st_dim)?;
        let scale = r.f64_vec(st_dim)?;
        Some(Standardizer { mean, scale })
    };
    r.finish()?;
    if layers
        .iter()
        .any(|l| l.weight.iter().chain(l.bias.iter()).any(|v| !v.is_finite()))
    {
        return Err(Error::format("model contains non-finite parameters"));
    }
    let mut model = Autoencoder::from_layers(config, layers)?;
    model.standardizer = standardizer;
    Ok(model)
}

pub fn save_model(model: &Autoencoder<f32>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Autoencoder<f32>> {
    decode_model(&fs::read(path)?)
}
