//! LATD binary container and the JSON-lines fixture format.
//!
//! LATD layout (little-endian):
//!
//! ```text
//! magic "LATD" | version u32 | dim u32 | n_records u64 | n_axes u16
//! schema_len u32 | schema JSON bytes
//! n_records * dim   f32   vectors, row-major
//! n_records * n_axes u16  labels
//! n_records         u64   ids
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{DemographicSchema, LatentDataset, LatentRecord};
use crate::error::{Error, Result};
use crate::io_util::ByteReader;

pub const LATD_MAGIC: &[u8; 4] = b"LATD";
pub const LATD_VERSION: u32 = 1;

/// Serializes a dataset to LATD bytes. Output is a pure function of the input.
pub fn encode_latd(ds: &LatentDataset) -> Result<Vec<u8>> {
    let schema = serde_json::to_vec(ds.schema())?;
    let n = ds.len();
    let d = ds.dim();
    let a = ds.schema().n_axes();
    let mut buf = Vec::with_capacity(26 + schema.len() + n * (d * 4 + a * 2 + 8));
    buf.extend_from_slice(LATD_MAGIC);
    buf.extend_from_slice(&LATD_VERSION.to_le_bytes());
    buf.extend_from_slice(&(d as u32).to_le_bytes());
    buf.extend_from_slice(&(n as u64).to_le_bytes());
    buf.extend_from_slice(&(a as u16).to_le_bytes());
    buf.extend_from_slice(&(schema.len() as u32).to_le_bytes());
    buf.extend_from_slice(&schema);
    for x in ds.vectors().iter() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    for l in ds.labels().iter() {
        buf.extend_from_slice(&l.to_le_bytes());
    }
    for id in ds.ids() {
        buf.extend_from_slice(&id.to_le_bytes());
    }
    Ok(buf)
}

pub fn decode_latd(bytes: &[u8]) -> Result<LatentDataset> {
    let mut r = ByteReader::new(bytes);
    if r.take(4)? != LATD_MAGIC {
        return Err(Error::format("bad magic, expected LATD"));
    }
    let version = r.u32()?;
    if version != LATD_VERSION {
        return Err(Error::format(format!("unsupported LATD version {version}")));
    }
    let dim = r.u32()? as usize;
    let n = r.u64()? as usize;
    let n_axes = r.u16()? as usize;
    let schema_len = r.u32()? as usize;
    let schema: DemographicSchema = serde_json::from_slice(r.take(schema_len)?)
        .map_err(|e| Error::format(format!("schema blob: {e}")))?;
    if schema.n_axes() != n_axes {
        return Err(Error::format(format!(
            "header declares {n_axes} axes, schema has {}",
            schema.n_axes()
        )));
    }
    let body = n
        .checked_mul(dim * 4 + n_axes * 2 + 8)
        .ok_or_else(|| Error::format("record count overflows"))?;
    if r.remaining() != body {
        return Err(Error::format(format!(
            "body is {} bytes, header implies {body}",
            r.remaining()
        )));
    }
    let vectors = r.f32_vec(n * dim)?;
    let labels = r.u16_vec(n * n_axes)?;
    let ids = r.u64_vec(n)?;
    let vectors = Array2::from_shape_vec((n, dim), vectors).expect("sized above");
    let labels = Array2::from_shape_vec((n, n_axes), labels).expect("sized above");
    LatentDataset::new(schema, ids, vectors, labels)
}

/// Reads a LATD file, or a JSON-lines file with its schema sidecar.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<LatentDataset> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.starts_with(LATD_MAGIC) {
        return decode_latd(&bytes);
    }
    if bytes.iter().find(|b| !b.is_ascii_whitespace()) == Some(&b'{') {
        return load_jsonl(path, schema_sidecar_path(path));
    }
    Err(Error::format(format!("{} is neither LATD nor JSON-lines", path.display())))
}

pub fn save_dataset(ds: &LatentDataset, path: impl AsRef<Path>) -> Result<()> {
    let bytes = encode_latd(ds)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// `data/foo.jsonl` -> `data/foo.schema.json`.
pub fn schema_sidecar_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.schema.json"))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LabelRef {
    Index(u16),
    Name(String),
}

#[derive(Deserialize)]
struct JsonRecordIn {
    id: u64,
    vector: Vec<f64>,
    labels: Vec<LabelRef>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: u64,
    vector: &'a [f32],
    labels: &'a [u16],
}

/// Reads one JSON object per line; labels may be value indices or value names.
pub fn load_jsonl(path: impl AsRef<Path>, schema_path: impl AsRef<Path>) -> Result<LatentDataset> {
    let schema: DemographicSchema = serde_json::from_slice(&fs::read(schema_path)?)
        .map_err(|e| Error::format(format!("schema sidecar: {e}")))?;
    schema.validate()?;
    let reader = BufReader::new(fs::File::open(path)?);
    let mut records = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecordIn = serde_json::from_str(&line)
            .map_err(|e| Error::format(format!("line {}: {e}", lineno + 1)))?;
        if rec.labels.len() != schema.n_axes() {
            return Err(Error::validation(format!(
                "line {}: {} labels for {} axes",
                lineno + 1,
                rec.labels.len(),
                schema.n_axes()
            )));
        }
        let labels = rec
            .labels
            .iter()
            .enumerate()
            .map(|(a, l)| match l {
                LabelRef::Index(i) => Ok(*i),
                LabelRef::Name(name) => schema.value_index(a, name).map(|v| v as u16).ok_or_else(|| {
                    Error::validation(format!("line {}: unknown value `{name}`", lineno + 1))
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        records.push(LatentRecord {
            id: rec.id,
            vector: rec.vector.iter().map(|&x| x as f32).collect(),
            labels,
        });
    }
    LatentDataset::from_records(schema, &records)
}

pub fn save_jsonl(ds: &LatentDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(fs::File::create(path)?);
    for i in 0..ds.len() {
        let v = ds.vectors().row(i).to_vec();
        let l = ds.labels().row(i).to_vec();
        serde_json::to_writer(
            &mut w,
            &JsonRecordOut {
                id: ds.ids()[i],
                vector: &v,
                labels: &l,
            },
        )?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    fs::write(schema_sidecar_path(path), serde_json::to_vec_pretty(ds.schema())?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_toy_dataset, DemographicSchema};

    fn toy() -> LatentDataset {
        let schema = DemographicSchema::from_pairs(&[("gender", &["f", "m"]), ("race", &["a", "b"])]).unwrap();
        synth_toy_dataset(&schema, 5, 2, 6, 3.0, 11).unwrap().0
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let ds = toy();
        let mut bytes = encode_latd(&ds).unwrap();
        // claim dim 7 while the body holds dim-6 vectors
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(decode_latd(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn bad_magic_and_version() {
        let ds = toy();
        let mut bytes = encode_latd(&ds).unwrap();
        bytes[0] = b'X';
        assert!(matches!(decode_latd(&bytes), Err(Error::Format(_))));
        let mut bytes = encode_latd(&ds).unwrap();
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(decode_latd(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn out_of_range_label_and_nan_rejected() {
        let ds = toy();
        let bytes = encode_latd(&ds).unwrap();
        let label_start = bytes.len() - ds.len() * 8 - ds.len() * 2;
        let mut bad = bytes.clone();
        bad[label_start..label_start + 2].copy_from_slice(&9u16.to_le_bytes());
        assert!(matches!(decode_latd(&bad), Err(Error::Validation(_))));

        let vec_start = label_start - ds.len() * ds.dim() * 4;
        let mut bad = bytes;
        bad[vec_start..vec_start + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(decode_latd(&bad), Err(Error::Validation(_))));
    }

    #[test]
    fn truncated_file() {
        let bytes = encode_latd(&toy()).unwrap();
        assert!(matches!(decode_latd(&bytes[..bytes.len() - 3]), Err(Error::Format(_))));
        assert!(matches!(decode_latd(&bytes[..10]), Err(Error::Format(_))));
    }

    #[test]
    fn jsonl_round_trip_and_named_labels() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy();
        let p = dir.path().join("toy.jsonl");
        save_jsonl(&ds, &p).unwrap();
        assert_eq!(load_dataset(&p).unwrap(), ds);

        let q = dir.path().join("hand.jsonl");
        fs::write(&q, "{\"id\":1,\"vector\":[0.5,1.0],\"labels\":[\"m\",0]}\n\n{\"id\":2,\"vector\":[1,2],\"labels\":[0,1]}\n").unwrap();
        fs::write(schema_sidecar_path(&q), serde_json::to_vec(ds.schema()).unwrap()).unwrap();
        let hand = load_dataset(&q).unwrap();
        assert_eq!(hand.len(), 2);
        assert_eq!(hand.labels().row(0).to_vec(), vec![1, 0]);
    }
}
