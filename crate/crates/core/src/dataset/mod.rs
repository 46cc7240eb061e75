//! Labeled latent-vector datasets.
//!
//! A dataset is a set of `d`-dimensional latent codes, each tagged with one
//! value index per demographic axis of a [`DemographicSchema`]. Storage is
//! columnar: an `n x d` `f32` matrix, an `n x axes` `u16` label matrix and a
//! vector of unique ids.

mod io;
mod split;
mod standardize;
mod synth;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{decode_latd, encode_latd, load_dataset, load_jsonl, save_dataset, save_jsonl, schema_sidecar_path, LATD_MAGIC, LATD_VERSION};
pub use split::{make_batches, split_dataset};
pub use standardize::{Direction, Standardizer, SCALE_FLOOR};
pub use synth::{synth_toy_dataset, synth_toy_dataset_with, GroupGaussian, ToyGroundTruth, ToyOptions};

/// One demographic axis, e.g. `gender` with values `[female, male]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicAxis {
    pub name: String,
    pub values: Vec<String>,
}

/// Ordered set of demographic axes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicSchema {
    pub axes: Vec<DemographicAxis>,
}

impl DemographicSchema {
    pub fn new(axes: Vec<DemographicAxis>) -> Result<Self> {
        let schema = Self { axes };
        schema.validate()?;
        Ok(schema)
    }

    /// Convenience constructor from `(name, [values])` pairs.
    pub fn from_pairs(pairs: &[(&str, &[&str])]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|(name, values)| DemographicAxis {
                    name: name.to_string(),
                    values: values.iter().map(|v| v.to_string()).collect(),
                })
                .collect(),
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.axes.is_empty() {
            return Err(Error::validation("schema needs at least one axis"));
        }
        let mut names = HashSet::new();
        for axis in &self.axes {
            if axis.name.is_empty() {
                return Err(Error::validation("axis name must be non-empty"));
            }
            if !names.insert(axis.name.as_str()) {
                return Err(Error::validation(format!("duplicate axis `{}`", axis.name)));
            }
            if axis.values.len() < 2 {
                return Err(Error::validation(format!(
                    "axis `{}` needs at least 2 values",
                    axis.name
                )));
            }
            if axis.values.len() > u16::MAX as usize {
                return Err(Error::validation(format!("axis `{}` has too many values", axis.name)));
            }
            let mut seen = HashSet::new();
            for v in &axis.values {
                if !seen.insert(v.as_str()) {
                    return Err(Error::validation(format!(
                        "duplicate value `{v}` on axis `{}`",
                        axis.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn axis_index(&self, name: &str) -> Option<usize> {
        self.axes.iter().position(|a| a.name == name)
    }

    pub fn value_index(&self, axis: usize, value: &str) -> Option<usize> {
        self.axes[axis].values.iter().position(|v| v == value)
    }

    /// Number of full group combinations (product of axis sizes).
    pub fn n_combinations(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Mixed-radix decoding of a combination index into per-axis labels.
    /// The last axis varies fastest.
    pub fn combination(&self, mut index: usize) -> Vec<u16> {
        let mut labels = vec![0u16; self.axes.len()];
        for (slot, axis) in labels.iter_mut().zip(&self.axes).rev() {
            let k = axis.values.len();
            *slot = (index % k) as u16;
            index /= k;
        }
        labels
    }

    pub fn combination_index(&self, labels: &[u16]) -> usize {
        labels
            .iter()
            .zip(&self.axes)
            .fold(0, |acc, (&l, axis)| acc * axis.values.len() + l as usize)
    }

    /// Selector naming every axis, i.e. one full group combination.
    pub fn full_selector(&self, labels: &[u16]) -> GroupSelector {
        GroupSelector {
            clauses: self
                .axes
                .iter()
                .zip(labels)
                .map(|(axis, &l)| (axis.name.clone(), axis.values[l as usize].clone()))
                .collect(),
        }
    }

    /// Copy of the schema with a reserved trailing value appended to every
    /// axis. Used to label sampled records on axes a selector leaves open.
    pub fn with_unknown_values(&self) -> Self {
        Self {
            axes: self
                .axes
                .iter()
                .map(|a| {
                    let mut values = a.values.clone();
                    values.push(UNKNOWN_VALUE.to_string());
                    DemographicAxis {
                        name: a.name.clone(),
                        values,
                    }
                })
                .collect(),
        }
    }
}

/// Reserved value name for axes that a sampled record is not conditioned on.
pub const UNKNOWN_VALUE: &str = "sampled/unknown";

/// Conjunction of `(axis, value)` clauses naming a demographic group.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GroupSelector {
    pub clauses: Vec<(String, String)>,
}

impl GroupSelector {
    pub fn all() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.clauses.is_empty()
    }

    /// Resolves clauses to `(axis index, value index)` against a schema.
    pub fn resolve(&self, schema: &DemographicSchema) -> Result<Vec<(usize, u16)>> {
        let mut used = HashSet::new();
        self.clauses
            .iter()
            .map(|(axis, value)| {
                let a = schema
                    .axis_index(axis)
                    .ok_or_else(|| Error::validation(format!("unknown axis `{axis}` in selector {self}")))?;
                if !used.insert(a) {
                    return Err(Error::validation(format!(
                        "selector {self} has more than one clause on axis `{axis}`"
                    )));
                }
                let v = schema.value_index(a, value).ok_or_else(|| {
                    Error::validation(format!("unknown value `{value}` for axis `{axis}`"))
                })?;
                Ok((a, v as u16))
            })
            .collect()
    }

    /// Filesystem-friendly tag, `all` for the empty selector.
    pub fn tag(&self) -> String {
        if self.clauses.is_empty() {
            return "all".to_string();
        }
        self.clauses
            .iter()
            .map(|(_, v)| {
                v.chars()
                    .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
                    .collect::<String>()
            })
            .collect::<Vec<_>>()
            .join("_")
    }
}

impl fmt::Display for GroupSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.clauses.is_empty() {
            return write!(f, "<all>");
        }
        let parts: Vec<String> = self.clauses.iter().map(|(a, v)| format!("{a}={v}")).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for GroupSelector {
    type Err = Error;

    /// Parses `axis=value,axis=value`; an empty string or `all` selects everything.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s == "all" {
            return Ok(Self::all());
        }
        let clauses = s
            .split(',')
            .map(|part| {
                let (a, v) = part
                    .split_once('=')
                    .ok_or_else(|| Error::validation(format!("selector clause `{part}` is not axis=value")))?;
                Ok((a.trim().to_string(), v.trim().to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { clauses })
    }
}

/// A single labeled latent code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentRecord {
    pub id: u64,
    pub vector: Vec<f32>,
    pub labels: Vec<u16>,
}

/// Immutable labeled latent dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentDataset {
    schema: DemographicSchema,
    ids: Vec<u64>,
    vectors: Array2<f32>,
    labels: Array2<u16>,
}

impl LatentDataset {
    /// Builds a dataset from columnar parts, checking every invariant.
    pub fn new(
        schema: DemographicSchema,
        ids: Vec<u64>,
        vectors: Array2<f32>,
        labels: Array2<u16>,
    ) -> Result<Self> {
        schema.validate()?;
        let n = vectors.nrows();
        if n == 0 {
            return Err(Error::validation("dataset must contain at least one record"));
        }
        if vectors.ncols() == 0 {
            return Err(Error::validation("dataset dimension must be positive"));
        }
        if ids.len() != n || labels.nrows() != n {
            return Err(Error::validation(format!(
                "record count mismatch: {} ids, {} vectors, {} label rows",
                ids.len(),
                n,
                labels.nrows()
            )));
        }
        if labels.ncols() != schema.n_axes() {
            return Err(Error::validation(format!(
                "labels have {} columns but schema has {} axes",
                labels.ncols(),
                schema.n_axes()
            )));
        }
        let mut seen = HashSet::with_capacity(n);
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::validation(format!("duplicate record id {id}")));
            }
        }
        for (i, row) in vectors.outer_iter().enumerate() {
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::validation(format!(
                    "record {} (id {}) has non-finite entry at position {j}",
                    i, ids[i]
                )));
            }
        }
        for (i, row) in labels.outer_iter().enumerate() {
            for (a, &l) in row.iter().enumerate() {
                if l as usize >= schema.axes[a].values.len() {
                    return Err(Error::validation(format!(
                        "record id {} has label {l} out of range for axis `{}`",
                        ids[i], schema.axes[a].name
                    )));
                }
            }
        }
        Ok(Self {
            schema,
            ids,
            vectors,
            labels,
        })
    }

    pub fn from_records(schema: DemographicSchema, records: &[LatentRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::validation("dataset must contain at least one record"))?;
        let dim = first.vector.len();
        let n_axes = schema.n_axes();
        let mut vectors = Array2::zeros((records.len(), dim));
        let mut labels = Array2::zeros((records.len(), n_axes));
        for (i, r) in records.iter().enumerate() {
            if r.vector.len() != dim {
                return Err(Error::validation(format!(
                    "record id {} has {} entries, expected {dim}",
                    r.id,
                    r.vector.len()
                )));
            }
            if r.labels.len() != n_axes {
                return Err(Error::validation(format!(
                    "record id {} has {} labels, expected {n_axes}",
                    r.id,
                    r.labels.len()
                )));
            }
            vectors.row_mut(i).assign(&ArrayView1::from(&r.vector[..]));
            labels.row_mut(i).assign(&ArrayView1::from(&r.labels[..]));
        }
        let ids = records.iter().map(|r| r.id).collect();
        Self::new(schema, ids, vectors, labels)
    }

    pub fn schema(&self) -> &DemographicSchema {
        &self.schema
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn vectors(&self) -> &Array2<f32> {
        &self.vectors
    }

    pub fn labels(&self) -> &Array2<u16> {
        &self.labels
    }

    /// Label column for one axis.
    pub fn axis_labels(&self, axis: usize) -> Vec<u16> {
        self.labels.column(axis).to_vec()
    }

    pub fn record(&self, i: usize) -> LatentRecord {
        LatentRecord {
            id: self.ids[i],
            vector: self.vectors.row(i).to_vec(),
            labels: self.labels.row(i).to_vec(),
        }
    }

    pub fn records(&self) -> impl Iterator<Item = LatentRecord> + '_ {
        (0..self.len()).map(|i| self.record(i))
    }

    /// Vectors widened to `f64`.
    pub fn vectors_f64(&self) -> Array2<f64> {
        self.vectors.mapv(f64::from)
    }

    /// Sub-dataset with the given row indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let ids = indices.iter().map(|&i| self.ids[i]).collect();
        Self::new(
            self.schema.clone(),
            ids,
            self.vectors.select(Axis(0), indices),
            self.labels.select(Axis(0), indices),
        )
    }

    /// Same ids, labels and schema with replaced vectors (any dimension).
    pub fn with_vectors(&self, vectors: Array2<f32>) -> Result<Self> {
        if vectors.nrows() != self.len() {
            return Err(Error::shape(format!(
                "replacement has {} rows, dataset has {}",
                vectors.nrows(),
                self.len()
            )));
        }
        Self::new(self.schema.clone(), self.ids.clone(), vectors, self.labels.clone())
    }

    /// Row indices of records matching every clause of `selector`.
    pub fn matching_indices(&self, selector: &GroupSelector) -> Result<Vec<usize>> {
        let clauses = selector.resolve(&self.schema)?;
        Ok((0..self.len())
            .filter(|&i| clauses.iter().all(|&(a, v)| self.labels[[i, a]] == v))
            .collect())
    }

    /// Full group-combination index of every record.
    pub fn combination_indices(&self) -> Vec<usize> {
        self.labels
            .outer_iter()
            .map(|row| self.schema.combination_index(row.as_slice().expect("row-major labels")))
            .collect()
    }
}

/// Records matching every clause of `selector`. An empty match is an error.
pub fn select_group(ds: &LatentDataset, selector: &GroupSelector) -> Result<LatentDataset> {
    let idx = ds.matching_indices(selector)?;
    if idx.is_empty() {
        return Err(Error::EmptyGroup(selector.to_string()));
    }
    ds.subset(&idx)
}
