//! Stage runner. Every stage reads its inputs from the run directory and
//! writes its outputs there, so any prefix of stages can be reused.

use std::collections::BTreeMap;
use std::fs;
use std::iter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use ndarray::{s, Array2, ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::{artifact_of, artifacts_intact, sha256_hex, RunManifest, StageRecord};
use super::sample::{emit_generator_handoff, run_sample_group};
use super::{derive_seed, DataSource, PipelineConfig};
use crate::autoencoder::{load_model, save_model, Autoencoder};
use crate::contrastive::{train_autoencoder, write_loss_csv, TrainConfig};
use crate::dataset::{
    load_dataset, load_jsonl, save_dataset, split_dataset, synth_toy_dataset_with, DemographicSchema, Direction,
    GroupSelector, LatentDataset, Standardizer,
};
use crate::error::{Error, Result};
use crate::eval::{
    cosine_similarity_score, histogram_intersection, ll_separation, pca_project, report_file_name, score_distribution,
    train_softmax_classifier, write_confusion_csv, write_histogram_svg, write_llsep_csv, write_projection_csv,
    write_scatter_svg, write_scores_csv, ConfusionMatrix, ScoreDistribution, ScoreMode,
};
use crate::gmm::{fit_group_gmm, load_gmm, save_gmm, write_loglik_csv, EmConfig, GmmModel};

pub const STAGES: [&str; 7] = ["data", "split", "train", "encode", "gmm", "sample", "evaluate"];
pub const SUMMARY_FILE: &str = "reports/summary.json";

const DATASET: &str = "data/dataset.latd";
const TRAIN: &str = "split/train.latd";
const TEST: &str = "split/test.latd";
const MODEL: &str = "model/autoencoder.lmae";
const LOSS: &str = "model/loss.csv";
const CODES_TRAIN: &str = "codes/train.latd";
const CODES_TEST: &str = "codes/test.latd";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisAccuracy {
    pub axis: String,
    pub accuracy: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSeparation {
    pub first: String,
    pub second: String,
    pub bottleneck: f64,
    pub raw: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScores {
    pub group: String,
    /// Number of synthetic pairs scored.
    pub pairs: usize,
    pub min_score: f64,
    pub max_score: f64,
    pub max_abs_self_score: f64,
    /// Overlap of synthetic and real same-group pair scores.
    pub intersection: Option<f64>,
    pub impostor_mean: Option<f64>,
    pub genuine_mean: Option<f64>,
}

/// Headline numbers of the evaluate stage, written to `reports/summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    /// `sum ||w - w*||^2 / sum ||w - mean||^2` over the test split.
    pub reconstruction_error: f64,
    /// Mean over test records of `||w - w*||^2 / ||w - mean||^2`.
    pub reconstruction_error_per_record: f64,
    pub classifier: Vec<AxisAccuracy>,
    pub ll_separation: Vec<PairSeparation>,
    pub mean_ll_separation: Option<f64>,
    pub mean_ll_separation_raw: Option<f64>,
    pub scores: Vec<GroupScores>,
    pub projection_explained: Vec<f64>,
}

pub fn load_summary(run_dir: impl AsRef<Path>) -> Result<EvalSummary> {
    Ok(serde_json::from_slice(&fs::read(run_dir.as_ref().join(SUMMARY_FILE))?)?)
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    root: PathBuf,
    stamp: String,
    seeds: BTreeMap<String, u64>,
    input_sha256: Option<String>,
    schema: Option<DemographicSchema>,
    selectors: Vec<GroupSelector>,
}

impl Ctx<'_> {
    fn seed(&mut self, label: &str) -> u64 {
        let s = derive_seed(self.cfg.seed, label);
        self.seeds.insert(label.to_string(), s);
        s
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn dir(&self, rel: &str) -> Result<()> {
        fs::create_dir_all(self.root.join(rel))?;
        Ok(())
    }

    fn load(&self, rel: &str) -> Result<LatentDataset> {
        load_dataset(self.path(rel))
    }

    fn schema(&self) -> &DemographicSchema {
        self.schema.as_ref().expect("schema is loaded after the data stage")
    }

    fn report(&self, kind: &str, group: &str, ext: &str) -> String {
        format!("reports/{}", report_file_name(kind, &file_tag(group), &self.stamp, ext))
    }

    /// Reads the dataset header and fixes the modeled groups.
    fn bind_dataset(&mut self) -> Result<()> {
        let ds = self.load(DATASET)?;
        let schema = ds.schema().clone();
        if ds.dim() != self.cfg.autoencoder.input_dim() {
            return Err(Error::Config(format!(
                "dataset dim {} differs from autoencoder input {}",
                ds.dim(),
                self.cfg.autoencoder.input_dim()
            )));
        }
        self.cfg.contrastive.validate(schema.n_axes())?;
        let mut selectors = self.cfg.selectors()?;
        if selectors.is_empty() {
            selectors = (0..schema.n_combinations())
                .map(|c| schema.full_selector(&schema.combination(c)))
                .collect();
        }
        for s in &selectors {
            s.resolve(&schema)?;
        }
        self.schema = Some(schema);
        self.selectors = selectors;
        Ok(())
    }
}

fn file_tag(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c.to_ascii_lowercase() } else { '-' })
        .collect()
}

fn source_file(cfg: &PipelineConfig) -> Option<&Path> {
    match &cfg.data {
        DataSource::Synth { .. } => None,
        DataSource::Latd { path } | DataSource::Jsonl { path, .. } => Some(path),
    }
}

fn file_sha(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

/// Runs every stage.
pub fn run_full_pipeline(cfg: &PipelineConfig) -> Result<RunManifest> {
    run_pipeline(cfg, None)
}

/// Runs stages up to and including `until`, reusing any stage whose recorded
/// artifacts are intact and whose upstream stages were all reused.
pub fn run_pipeline(cfg: &PipelineConfig, until: Option<&str>) -> Result<RunManifest> {
    cfg.validate()?;
    let last = match until {
        None => STAGES.len() - 1,
        Some(name) => STAGES
            .iter()
            .position(|s| *s == name)
            .ok_or_else(|| Error::Config(format!("unknown stage `{name}`; stages are {}", STAGES.join(", "))))?,
    };
    let root = cfg.output_dir.clone();
    fs::create_dir_all(&root)?;
    let config_hash = cfg.config_hash();
    let prev = RunManifest::load(&root).ok();
    let same_config = prev.as_ref().filter(|p| p.config_hash == config_hash && p.seed == cfg.seed);

    let mut ctx = Ctx {
        cfg,
        root: root.clone(),
        stamp: config_hash[..8].to_string(),
        seeds: BTreeMap::new(),
        input_sha256: None,
        schema: None,
        selectors: Vec::new(),
    };
    let mut manifest = RunManifest::new(config_hash, cfg.seed);
    let mut dirty = false;

    for (i, &name) in STAGES.iter().enumerate() {
        let old = prev.as_ref().and_then(|p| p.stage(name));
        let mut reusable = same_config
            .and_then(|p| p.stage(name))
            .filter(|r| !dirty && artifacts_intact(&root, &r.artifacts));
        if let (Some(r), Some(src), "data") = (reusable, source_file(cfg), name) {
            if r.input_sha256.as_deref() != Some(file_sha(src)?.as_str()) {
                reusable = None;
            }
        }

        if i > last {
            match reusable {
                Some(r) => manifest.stages.push(r.clone()),
                None => remove_artifacts(&root, old),
            }
            dirty = true;
            continue;
        }

        if let Some(r) = reusable {
            info!("stage {name}: up to date");
            manifest.stages.push(r.clone());
        } else {
            dirty = true;
            remove_artifacts(&root, old);
            info!("stage {name}: running");
            let t = Instant::now();
            ctx.seeds.clear();
            ctx.input_sha256 = None;
            let files = run_stage(&mut ctx, name).map_err(|e| Error::Stage {
                stage: name.to_string(),
                source: Box::new(e),
            })?;
            let artifacts = files.iter().map(|f| artifact_of(&root, f)).collect::<Result<Vec<_>>>()?;
            let seconds = t.elapsed().as_secs_f64();
            info!("stage {name}: done in {seconds:.1}s, {} files", artifacts.len());
            manifest.stages.push(StageRecord {
                name: name.to_string(),
                seeds: std::mem::take(&mut ctx.seeds),
                input_sha256: ctx.input_sha256.take(),
                artifacts,
                seconds,
            });
            manifest.seal();
            manifest.save(&root)?;
        }
        if name == "data" {
            ctx.bind_dataset()?;
        }
    }
    manifest.seal();
    manifest.save(&root)?;
    Ok(manifest)
}

fn remove_artifacts(root: &Path, stage: Option<&StageRecord>) {
    for a in stage.into_iter().flat_map(|s| &s.artifacts) {
        let _ = fs::remove_file(root.join(&a.path));
    }
}

fn run_stage(ctx: &mut Ctx, name: &str) -> Result<Vec<String>> {
    match name {
        "data" => stage_data(ctx),
        "split" => stage_split(ctx),
        "train" => stage_train(ctx),
        "encode" => stage_encode(ctx),
        "gmm" => stage_gmm(ctx),
        "sample" => stage_sample(ctx),
        "evaluate" => stage_evaluate(ctx),
        _ => unreachable!("stage list is fixed"),
    }
}

fn stage_data(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("data")?;
    let ds = match &ctx.cfg.data {
        DataSource::Synth {
            axes,
            n_per_group,
            sem_dim,
            dim,
            separation,
            options,
        } => {
            let schema = DemographicSchema::new(axes.clone())?;
            let seed = ctx.seed("synth");
            synth_toy_dataset_with(&schema, *n_per_group, *sem_dim, *dim, *separation, seed, options)?.0
        }
        DataSource::Latd { path } => {
            ctx.input_sha256 = Some(file_sha(path)?);
            load_dataset(path)?
        }
        DataSource::Jsonl { path, schema } => {
            ctx.input_sha256 = Some(file_sha(path)?);
            load_jsonl(path, schema)?
        }
    };
    save_dataset(&ds, ctx.path(DATASET))?;
    Ok(vec![DATASET.into()])
}

fn stage_split(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("split")?;
    let ds = ctx.load(DATASET)?;
    let seed = ctx.seed("split");
    let (train, test) = split_dataset(&ds, ctx.cfg.test_fraction, seed)?;
    save_dataset(&train, ctx.path(TRAIN))?;
    save_dataset(&test, ctx.path(TEST))?;
    Ok(vec![TRAIN.into(), TEST.into()])
}

fn stage_train(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("model")?;
    let train = ctx.load(TRAIN)?;
    let st = if ctx.cfg.standardize { Some(Standardizer::fit(&train)?) } else { None };
    let std_train = match &st {
        Some(st) => st.apply(&train, Direction::Forward)?,
        None => train.clone(),
    };
    let mut ae_cfg = ctx.cfg.autoencoder.clone();
    ae_cfg.init_seed = ctx.seed("autoencoder-init");
    let train_cfg = TrainConfig {
        seed: ctx.seed("batch-shuffle"),
        ..ctx.cfg.train.clone()
    };
    let mut model = Autoencoder::<f32>::new(ae_cfg)?;
    let curve = train_autoencoder(&mut model, &std_train, &ctx.cfg.contrastive, &train_cfg)?;
    if let Some(r) = curve.last() {
        info!("final loss {:.6} (recon {:.6})", r.total, r.recon);
    }
    let model = match st {
        Some(st) => model.with_standardizer(st)?,
        None => model,
    };
    save_model(&model, ctx.path(MODEL))?;
    let axes: Vec<String> = train.schema().axes.iter().map(|a| a.name.clone()).collect();
    write_loss_csv(ctx.path(LOSS), &curve, &axes)?;
    Ok(vec![MODEL.into(), LOSS.into()])
}

fn encode(model: &Autoencoder<f32>, ds: &LatentDataset) -> Result<LatentDataset> {
    let b = model.encode_raw(ds.vectors_f64().view())?;
    ds.with_vectors(b.mapv(|v| v as f32))
}

fn stage_encode(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("codes")?;
    let model = load_model(ctx.path(MODEL))?;
    for (src, dst) in [(TRAIN, CODES_TRAIN), (TEST, CODES_TEST)] {
        save_dataset(&encode(&model, &ctx.load(src)?)?, ctx.path(dst))?;
    }
    Ok(vec![CODES_TRAIN.into(), CODES_TEST.into()])
}

fn gmm_path(raw: bool, sel: &GroupSelector) -> String {
    if raw {
        format!("gmm/raw/{}.lgmm", sel.tag())
    } else {
        format!("gmm/{}.lgmm", sel.tag())
    }
}

fn fit_all(space: &str, data: &LatentDataset, sels: &[GroupSelector], base: &EmConfig, seeds: &[u64]) -> Result<Vec<GmmModel>> {
    sels.par_iter()
        .zip(seeds)
        .map(|(sel, &seed)| {
            let cfg = EmConfig { seed, ..base.clone() };
            let (model, hist) = fit_group_gmm(data, sel, &cfg)?;
            info!("{space} mixture {sel}: {} EM iterations, mean LL {:.4}", hist.len() - 1, model.fit.final_ll);
            Ok(model)
        })
        .collect()
}

fn stage_gmm(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("gmm")?;
    let sels = ctx.selectors.clone();
    let seeds: Vec<u64> = sels.iter().map(|s| ctx.seed(&format!("gmm/{}", s.tag()))).collect();
    let codes = ctx.load(CODES_TRAIN)?;
    let models = fit_all("bottleneck", &codes, &sels, &ctx.cfg.em, &seeds)?;
    let mut files = Vec::new();
    for (sel, m) in sels.iter().zip(&models) {
        let p = gmm_path(false, sel);
        save_gmm(m, ctx.path(&p))?;
        files.push(p);
    }
    let test = ctx.load(CODES_TEST)?;
    let refs: Vec<&GmmModel> = models.iter().collect();
    write_loglik_csv(ctx.path("gmm/test_loglik.csv"), test.ids(), test.vectors_f64().view(), &refs)?;
    files.push("gmm/test_loglik.csv".into());

    if ctx.cfg.evaluation.raw_baseline {
        ctx.dir("gmm/raw")?;
        let seeds: Vec<u64> = sels.iter().map(|s| ctx.seed(&format!("gmm-raw/{}", s.tag()))).collect();
        let raw = ctx.load(TRAIN)?;
        for (sel, m) in sels.iter().zip(fit_all("raw", &raw, &sels, &ctx.cfg.em, &seeds)?) {
            let p = gmm_path(true, sel);
            save_gmm(&m, ctx.path(&p))?;
            files.push(p);
        }
    }
    Ok(files)
}

fn stage_sample(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("samples")?;
    let model = load_model(ctx.path(MODEL))?;
    let schema = ctx.schema().clone();
    let mut files = Vec::new();
    for sel in ctx.selectors.clone() {
        let gmm = load_gmm(ctx.path(&gmm_path(false, &sel)))?;
        let seed = ctx.seed(&format!("sample/{}", sel.tag()));
        let ds = run_sample_group(&model, &gmm, &schema, ctx.cfg.samples_per_group, seed)?;
        let p = format!("samples/{}.latd", sel.tag());
        save_dataset(&ds, ctx.path(&p))?;
        files.push(p);
        if let Some(styles) = ctx.cfg.handoff_styles {
            let raw = format!("samples/{}.f32", sel.tag());
            emit_generator_handoff(ds.vectors().view(), ctx.path(&raw), styles)?;
            files.push(raw);
            files.push(format!("samples/{}.json", sel.tag()));
        }
    }
    Ok(files)
}

fn rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

fn combination_name(schema: &DemographicSchema, labels: &[u16]) -> String {
    labels
        .iter()
        .zip(&schema.axes)
        .map(|(&v, a)| a.values[v as usize].as_str())
        .collect::<Vec<_>>()
        .join(",")
}

/// Scores of the `quantile` closest (Euclidean) pairs within `x`.
fn genuine_scores(x: ArrayView2<f64>, quantile: f64) -> Result<Vec<f64>> {
    let n = x.nrows();
    let mut pairs = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            let d = &x.row(i) - &x.row(j);
            pairs.push((d.dot(&d), i, j));
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2))));
    let k = ((pairs.len() as f64 * quantile).ceil() as usize).min(pairs.len());
    pairs[..k]
        .iter()
        .map(|&(_, i, j)| cosine_similarity_score(x.row(i), x.row(j)))
        .collect()
}

fn stage_evaluate(ctx: &mut Ctx) -> Result<Vec<String>> {
    ctx.dir("reports")?;
    let cfg = ctx.cfg;
    let ev = &cfg.evaluation;
    let schema = ctx.schema().clone();
    let sels = ctx.selectors.clone();
    let model = load_model(ctx.path(MODEL))?;
    let test = ctx.load(TEST)?;
    let codes_test = ctx.load(CODES_TEST)?;
    let raw_test = test.vectors_f64();
    let b_test = codes_test.vectors_f64();
    let mut files = Vec::new();

    let recon = model.decode_raw(model.encode_raw(raw_test.view())?.view())?;
    let mean = raw_test.mean_axis(Axis(0)).expect("non-empty test split");
    let err: f64 = (&raw_test - &recon).mapv(|v| v * v).sum();
    let spread: f64 = (&raw_test - &mean).mapv(|v| v * v).sum();
    let reconstruction_error = err / spread.max(f64::MIN_POSITIVE);
    let reconstruction_error_per_record = raw_test
        .outer_iter()
        .zip(recon.outer_iter())
        .map(|(w, r)| {
            let e: f64 = (&w - &r).mapv(|v| v * v).sum();
            e / (&w - &mean).mapv(|v| v * v).sum().max(f64::MIN_POSITIVE)
        })
        .sum::<f64>()
        / raw_test.nrows() as f64;
    info!(
        "held-out relative reconstruction error {reconstruction_error:.5} pooled, \
         {reconstruction_error_per_record:.5} per record"
    );

    let mut samples = Vec::with_capacity(sels.len());
    let mut resampled = Vec::with_capacity(sels.len());
    for sel in &sels {
        let s = ctx.load(&format!("samples/{}.latd", sel.tag()))?;
        resampled.push(model.encode_raw(s.vectors_f64().view())?);
        samples.push(s.vectors_f64());
    }

    let mut classifier = Vec::new();
    for (a, axis) in schema.axes.iter().enumerate() {
        let clf = train_softmax_classifier(
            b_test.view(),
            &codes_test.axis_labels(a),
            axis.values.len(),
            &axis.name,
            &ev.classifier,
        )?;
        let (mut truth, mut pred) = (Vec::new(), Vec::new());
        for (sel, codes) in sels.iter().zip(&resampled) {
            let Some((_, v)) = sel.resolve(&schema)?.into_iter().find(|&(ax, _)| ax == a) else {
                continue;
            };
            let p = clf.classify_batch(codes.view())?;
            truth.extend(iter::repeat_n(v, p.len()));
            pred.extend(p);
        }
        if truth.is_empty() {
            continue;
        }
        let cm = ConfusionMatrix::from_predictions(&axis.name, &axis.values, &truth, &pred)?;
        let p = ctx.report("confusion", &axis.name, "csv");
        write_confusion_csv(ctx.path(&p), &cm)?;
        files.push(p);
        info!("axis {}: sampled-group accuracy {:.4}", axis.name, cm.accuracy());
        classifier.push(AxisAccuracy {
            axis: axis.name.clone(),
            accuracy: cm.accuracy(),
            samples: cm.total(),
        });
    }

    let load_all = |raw: bool| -> Result<Vec<GmmModel>> {
        sels.iter().map(|s| load_gmm(ctx.path(&gmm_path(raw, s)))).collect()
    };
    let gmms = load_all(false)?;
    let raw_gmms = if ev.raw_baseline { Some(load_all(true)?) } else { None };
    let test_idx = sels
        .iter()
        .map(|s| codes_test.matching_indices(s))
        .collect::<Result<Vec<_>>>()?;
    let pairs: Vec<(usize, usize)> = (0..sels.len())
        .flat_map(|i| (i + 1..sels.len()).map(move |j| (i, j)))
        .collect();
    let reports = pairs
        .par_iter()
        .map(|&(i, j)| {
            let (ti, tj) = (&test_idx[i], &test_idx[j]);
            let b = ll_separation(&gmms[i], &gmms[j], rows(b_test.view(), ti).view(), rows(b_test.view(), tj).view())?;
            let r = match &raw_gmms {
                Some(rg) => Some(ll_separation(&rg[i], &rg[j], rows(raw_test.view(), ti).view(), rows(raw_test.view(), tj).view())?),
                None => None,
            };
            Ok((b, r))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ll_sep = Vec::new();
    for (&(i, j), (b, r)) in pairs.iter().zip(&reports) {
        let group = format!("{}-vs-{}", sels[i].tag(), sels[j].tag());
        let p = ctx.report("llsep", &group, "csv");
        write_llsep_csv(ctx.path(&p), b)?;
        files.push(p);
        if let Some(r) = r {
            let p = ctx.report("llsep-raw", &group, "csv");
            write_llsep_csv(ctx.path(&p), r)?;
            files.push(p);
        }
        info!(
            "LL separation {group}: bottleneck {:.4}{}",
            b.accuracy,
            r.as_ref().map(|r| format!(", raw {:.4}", r.accuracy)).unwrap_or_default()
        );
        ll_sep.push(PairSeparation {
            first: sels[i].to_string(),
            second: sels[j].to_string(),
            bottleneck: b.accuracy,
            raw: r.as_ref().map(|r| r.accuracy),
        });
    }
    let mean_of = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let mean_ll_separation = mean_of(ll_sep.iter().map(|p| p.bottleneck).collect());
    let mean_ll_separation_raw = if ev.raw_baseline {
        mean_of(ll_sep.iter().filter_map(|p| p.raw).collect())
    } else {
        None
    };

    let proj = pca_project(b_test.view(), 2.min(b_test.ncols()))?;
    let names: Vec<String> = codes_test
        .labels()
        .outer_iter()
        .map(|l| combination_name(&schema, l.as_slice().expect("row-major labels")))
        .collect();
    let mut projection_explained = proj.explained.clone();
    projection_explained.truncate(proj.coords.ncols());
    if proj.coords.ncols() == 2 {
        let p = ctx.report("projection", "test", "csv");
        write_projection_csv(ctx.path(&p), proj.coords.view(), &names)?;
        files.push(p);
        let p = ctx.report("projection", "test", "svg");
        write_scatter_svg(ctx.path(&p), "held-out codes", proj.coords.view(), &names, ["pc1", "pc2"])?;
        files.push(p);

        let all: Vec<ArrayView2<f64>> = resampled.iter().map(|r| r.view()).collect();
        let stacked = ndarray::concatenate(Axis(0), &all).map_err(|e| Error::shape(e.to_string()))?;
        let coords = (&stacked - &proj.mean).dot(&proj.components.t());
        let groups: Vec<String> = sels
            .iter()
            .zip(&resampled)
            .flat_map(|(s, r)| iter::repeat_n(s.to_string(), r.nrows()))
            .collect();
        let p = ctx.report("projection", "sampled", "csv");
        write_projection_csv(ctx.path(&p), coords.view(), &groups)?;
        files.push(p);
        let p = ctx.report("projection", "sampled", "svg");
        write_scatter_svg(ctx.path(&p), "re-encoded samples", coords.view(), &groups, ["pc1", "pc2"])?;
        files.push(p);
    }

    let raw_idx = sels
        .iter()
        .map(|s| test.matching_indices(s))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = Vec::new();
    for ((sel, w), idx) in sels.iter().zip(&samples).zip(&raw_idx) {
        let k = ev.score_samples.min(w.nrows());
        let syn = w.slice(s![..k, ..]);
        let synthetic = score_distribution("synthetic", syn, syn, ScoreMode::Within, ev.score_bins)?;
        let max_abs_self_score = syn
            .outer_iter()
            .map(|u| cosine_similarity_score(u, u).map(f64::abs))
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .fold(0.0, f64::max);
        let (lo, hi) = synthetic
            .scores
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let mut dists = vec![synthetic];
        let (mut intersection, mut impostor_mean, mut genuine_mean) = (None, None, None);
        if idx.len() >= 2 {
            let real = rows(raw_test.view(), idx);
            let impostor = score_distribution("real impostor", real.view(), real.view(), ScoreMode::Within, ev.score_bins)?;
            let genuine = ScoreDistribution::from_scores(
                "genuine analog",
                ScoreMode::Within,
                genuine_scores(real.view(), ev.genuine_quantile)?,
                ev.score_bins,
            )?;
            intersection = Some(histogram_intersection(&dists[0], &impostor)?);
            impostor_mean = Some(impostor.mean());
            genuine_mean = Some(genuine.mean());
            dists.push(impostor);
            dists.push(genuine);
        }
        let refs: Vec<&ScoreDistribution> = dists.iter().collect();
        let p = ctx.report("scores", &sel.tag(), "csv");
        write_scores_csv(ctx.path(&p), &refs)?;
        files.push(p);
        let p = ctx.report("scores", &sel.tag(), "svg");
        write_histogram_svg(ctx.path(&p), &format!("similarity scores, {sel}"), &refs)?;
        files.push(p);
        scores.push(GroupScores {
            group: sel.to_string(),
            pairs: dists[0].count(),
            min_score: lo,
            max_score: hi,
            max_abs_self_score,
            intersection,
            impostor_mean,
            genuine_mean,
        });
    }

    let summary = EvalSummary {
        reconstruction_error,
        reconstruction_error_per_record,
        classifier,
        ll_separation: ll_sep,
        mean_ll_separation,
        mean_ll_separation_raw,
        scores,
        projection_explained,
    };
    let mut text = serde_json::to_string_pretty(&summary)?;
    text.push('\n');
    fs::write(ctx.path(SUMMARY_FILE), text)?;
    files.push(SUMMARY_FILE.into());
    Ok(files)
}
