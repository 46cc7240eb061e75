//! Python bindings. Matrices cross the boundary as lists of row lists.

use std::path::PathBuf;

use ndarray::{Array2, ArrayView1};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use latmod::autoencoder::{load_model, save_model, Autoencoder, AutoencoderConfig};
use latmod::contrastive::{build_pair_sets, lifted_structured_loss, train_autoencoder, ContrastiveConfig, TrainConfig};
use latmod::dataset::{
    load_dataset as load_latd, save_dataset, synth_toy_dataset, DemographicAxis, DemographicSchema, Direction,
    GroupSelector, Standardizer,
};
use latmod::eval::cosine_similarity_score as cos_score;
use latmod::gmm::{fit_group_gmm, load_gmm, save_gmm, EmConfig};
use latmod::pipeline::{run_pipeline as run_stages, sample_latents, PipelineConfig};
use latmod::Error;

fn py_err(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.exit_code() {
        2 => PyOSError::new_err(msg),
        3 => PyArithmeticError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

fn to_array(rows: Vec<Vec<f64>>) -> PyResult<Array2<f64>> {
    let n = rows.len();
    let d = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Array2::from_shape_vec((n, d), rows.into_iter().flatten().collect()).map_err(|e| PyValueError::new_err(e.to_string()))
}

fn to_rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.outer_iter().map(|r| r.to_vec()).collect()
}

/// Writes a toy dataset with one Gaussian cluster per group combination.
#[pyfunction]
#[pyo3(signature = (path, axes, n_per_group = 100, sem_dim = 6, dim = 64, separation = 4.0, seed = 0))]
fn synth_dataset(
    path: PathBuf,
    axes: Vec<(String, Vec<String>)>,
    n_per_group: usize,
    sem_dim: usize,
    dim: usize,
    separation: f64,
    seed: u64,
) -> PyResult<usize> {
    let schema = DemographicSchema::new(axes.into_iter().map(|(name, values)| DemographicAxis { name, values }).collect())
        .map_err(py_err)?;
    let (ds, _) = synth_toy_dataset(&schema, n_per_group, sem_dim, dim, separation, seed).map_err(py_err)?;
    save_dataset(&ds, &path).map_err(py_err)?;
    Ok(ds.len())
}

/// Reads a LATD file into a dict with `axes`, `ids`, `vectors` and `labels`.
#[pyfunction]
fn load_dataset<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let ds = load_latd(&path).map_err(py_err)?;
    let out = PyDict::new(py);
    let axes: Vec<(String, Vec<String>)> = ds.schema().axes.iter().map(|a| (a.name.clone(), a.values.clone())).collect();
    out.set_item("axes", axes)?;
    out.set_item("ids", ds.ids().to_vec())?;
    out.set_item("vectors", to_rows(&ds.vectors_f64()))?;
    out.set_item("labels", ds.labels().outer_iter().map(|r| r.to_vec()).collect::<Vec<_>>())?;
    Ok(out)
}

/// Trains an autoencoder on a LATD file and saves it. Returns the final
/// `(total, reconstruction)` loss.
#[pyfunction]
#[pyo3(signature = (input, out, dims, epochs = 200, batch_size = 192, lambda1 = 100.0, lambda2 = 1.0, alpha = 1.0, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    input: PathBuf,
    out: PathBuf,
    dims: Vec<usize>,
    epochs: usize,
    batch_size: usize,
    lambda1: f64,
    lambda2: f64,
    alpha: f64,
    seed: u64,
) -> PyResult<(f64, f64)> {
    py.detach(|| {
        let data = load_latd(&input)?;
        let st = Standardizer::fit(&data)?;
        let std_data = st.apply(&data, Direction::Forward)?;
        let mut model = Autoencoder::<f32>::new(AutoencoderConfig {
            init_seed: seed,
            ..AutoencoderConfig::symmetric(&dims)
        })?;
        let con = ContrastiveConfig { lambda1, lambda2, alpha, ..ContrastiveConfig::default() };
        let curve = train_autoencoder(&mut model, &std_data, &con, &TrainConfig { epochs, batch_size, seed })?;
        save_model(&model.with_standardizer(st)?, &out)?;
        let last = curve.last().map_or((f64::NAN, f64::NAN), |r| (r.total, r.recon));
        Ok(last)
    })
    .map_err(py_err)
}

/// Raw latents to bottleneck codes.
#[pyfunction]
fn encode(model: PathBuf, vectors: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = load_model(&model).map_err(py_err)?;
    Ok(to_rows(&m.encode_raw(to_array(vectors)?.view()).map_err(py_err)?))
}

/// Bottleneck codes back to raw latents.
#[pyfunction]
fn decode(model: PathBuf, codes: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
    let m = load_model(&model).map_err(py_err)?;
    Ok(to_rows(&m.decode_raw(to_array(codes)?.view()).map_err(py_err)?))
}

/// Fits a mixture to one group of a LATD file; returns the final mean log-likelihood.
#[pyfunction]
#[pyo3(signature = (input, out, group = "all", components = 16, seed = 0))]
fn fit_gmm(input: PathBuf, out: PathBuf, group: &str, components: usize, seed: u64) -> PyResult<f64> {
    let ds = load_latd(&input).map_err(py_err)?;
    let sel: GroupSelector = group.parse().map_err(py_err)?;
    let cfg = EmConfig { components, seed, ..EmConfig::default() };
    let (model, _) = fit_group_gmm(&ds, &sel, &cfg).map_err(py_err)?;
    save_gmm(&model, &out).map_err(py_err)?;
    Ok(model.fit.final_ll)
}

#[pyfunction]
fn log_likelihood(gmm: PathBuf, vectors: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let m = load_gmm(&gmm).map_err(py_err)?;
    Ok(m.log_likelihoods(to_array(vectors)?.view()).map_err(py_err)?.to_vec())
}

/// Draws codes from a mixture and decodes them to raw latents.
#[pyfunction]
#[pyo3(signature = (model, gmm, n, seed = 0))]
fn sample(model: PathBuf, gmm: PathBuf, n: usize, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let ae = load_model(&model).map_err(py_err)?;
    let g = load_gmm(&gmm).map_err(py_err)?;
    Ok(to_rows(&sample_latents(&ae, &g, n, seed).map_err(py_err)?))
}

#[pyfunction]
fn cosine_similarity_score(u: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
    cos_score(ArrayView1::from(&u), ArrayView1::from(&v)).map_err(py_err)
}

/// Lifted structured loss of one labelling of `embeddings`.
#[pyfunction]
fn lifted_loss(embeddings: Vec<Vec<f64>>, labels: Vec<u16>, alpha: f64) -> PyResult<f64> {
    let b = to_array(embeddings)?;
    if labels.len() != b.nrows() {
        return Err(PyValueError::new_err("one label per embedding required"));
    }
    Ok(lifted_structured_loss(b.view(), &build_pair_sets(&labels), alpha).map_err(py_err)?.0)
}

/// Runs (or resumes) the pipeline from a JSON config string; returns the
/// manifest hash.
#[pyfunction]
#[pyo3(signature = (config_json, output_dir = None, until = None))]
fn run_pipeline(py: Python<'_>, config_json: &str, output_dir: Option<PathBuf>, until: Option<String>) -> PyResult<String> {
    let mut cfg: PipelineConfig = serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    let m = py.detach(|| run_stages(&cfg, until.as_deref())).map_err(py_err)?;
    Ok(m.manifest_hash)
}

#[pymodule]
pub fn latmod_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(synth_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(load_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(log_likelihood, m)?)?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(cosine_similarity_score, m)?)?;
    m.add_function(wrap_pyfunction!(lifted_loss, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    Ok(())
}
