//! `latmod` command-line interface.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use ndarray::Axis;
use serde_json::{json, Value};

use crate::autoencoder::{load_model, save_model, Autoencoder, AutoencoderConfig};
use crate::contrastive::{train_autoencoder, write_loss_csv, ContrastiveConfig, TrainConfig};
use crate::dataset::{
    load_dataset, load_jsonl, save_dataset, save_jsonl, schema_sidecar_path, select_group, split_dataset,
    synth_toy_dataset_with, DemographicAxis, DemographicSchema, Direction, GroupSelector, LatentDataset, Standardizer,
    ToyOptions,
};
use crate::error::{Error, Result};
use crate::eval::{
    ll_separation, pca_project, score_distribution, train_softmax_classifier, write_confusion_csv, write_histogram_svg,
    write_llsep_csv, write_projection_csv, write_scatter_svg, write_scores_csv, ScoreMode, SoftmaxConfig,
    DEFAULT_BINS,
};
use crate::gmm::{fit_group_gmm, load_gmm, save_gmm, write_loglik_csv, CovarianceMode, EmConfig};
use crate::pipeline::{
    emit_generator_handoff, load_summary, run_pipeline, run_sample_group, PipelineConfig, RunManifest, STAGES,
};

#[derive(Debug, Parser)]
#[command(name = "latmod", version, about = "Group-conditional latent-space modeling")]
pub struct Cli {
    /// Log progress as one JSON object per line on stderr.
    #[arg(long, global = true)]
    pub json: bool,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a toy labeled latent dataset.
    SynthData(SynthArgs),
    /// Stratified train/test split.
    Split(SplitArgs),
    /// Train the contrastive autoencoder.
    TrainAe(TrainArgs),
    /// Map latents to bottleneck codes.
    Encode(CodecArgs),
    /// Map bottleneck codes back to latents.
    Decode(CodecArgs),
    /// Fit a Gaussian mixture to one group of encoded records.
    FitGmm(FitArgs),
    /// Per-record log-likelihood under one or more mixtures.
    Loglik(LoglikArgs),
    /// Sample decoded latents for the group of a mixture.
    Sample(SampleArgs),
    /// Write latents as raw f32 plus a JSON sidecar for a generator.
    Handoff(HandoffArgs),
    /// Train an axis classifier and write per-record predictions.
    Classify(ClassifyArgs),
    /// Train an axis classifier and write its confusion matrix.
    Confusion(ClassifyArgs),
    /// Similarity-score distribution of one or two sets.
    Simscore(SimscoreArgs),
    /// Log-likelihood separation of two groups.
    Llsep(LlsepArgs),
    /// Two-dimensional PCA projection.
    Project(ProjectArgs),
    /// Run the whole pipeline from a JSON config.
    Run(RunArgs),
    /// Summarize a finished run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Axes as `name=v1,v2;name=v1,v2`.
    #[arg(long, default_value = "gender=female,male;race=a,b")]
    pub schema: String,
    #[arg(long, default_value_t = 500)]
    pub n_per_group: usize,
    #[arg(long, default_value_t = 6)]
    pub sem_dim: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4.0)]
    pub separation: f64,
    #[arg(long)]
    pub axis_var: Option<f64>,
    /// Nuisance standard deviation range as `lo,hi`.
    #[arg(long)]
    pub nuisance_std: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `.latd`, or `.jsonl` (schema written next to it).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.25)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory receiving `train.latd` and `test.latd`.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// JSON with optional `autoencoder`, `contrastive` and `train` sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Encoder widths, input first, e.g. `64,1024,128`.
    #[arg(long)]
    pub dims: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Train on the inputs as given instead of per-dimension standardized.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct CodecArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovArg {
    Diagonal,
    Full,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Encoded records (LATD).
    #[arg(long)]
    pub input: PathBuf,
    /// Selector such as `gender=female,race=a`; `all` for every record.
    #[arg(long, default_value = "all")]
    pub group: String,
    #[arg(long, default_value_t = 16)]
    pub components: usize,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub floor: f64,
    #[arg(long, value_enum, default_value_t = CovArg::Diagonal)]
    pub covariance: CovArg,
    #[arg(long, default_value_t = 1)]
    pub restarts: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Mean log-likelihood per EM iteration.
    #[arg(long)]
    pub history_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LoglikArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, required = true, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub gmm: PathBuf,
    /// Any LATD file carrying the schema the mixture's group refers to.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(short, long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HandoffArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub styles: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Labeled records the classifier is trained on.
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub axis: String,
    /// Records to classify; their labels are the truth.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lr: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimscoreArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Second set; scores all cross pairs instead of pairs within `--input`.
    #[arg(long)]
    pub other: Option<PathBuf>,
    /// Use at most this many records of each set.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    #[arg(long, default_value = "scores")]
    pub label: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LlsepArgs {
    #[arg(long)]
    pub first: PathBuf,
    #[arg(long)]
    pub second: PathBuf,
    /// Encoded test records; each model is scored on its own group's subset.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Stop after this stage.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(STAGES))]
    pub stage: Option<String>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn cmd_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    init_logging(cli.json, cli.verbose);
    match execute(&cli.command) {
        Ok(v) => {
            print_result(&v, cli.json);
            0
        }
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn init_logging(json: bool, verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Info,
        1 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let mut b = env_logger::Builder::new();
    b.filter_level(level).parse_default_env().target(env_logger::Target::Stderr);
    if json {
        b.format(|buf, rec| {
            let line = json!({
                "level": rec.level().as_str().to_lowercase(),
                "target": rec.target(),
                "message": rec.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    let _ = b.try_init();
}

fn print_result(v: &Value, json: bool) {
    let mut out = std::io::stdout().lock();
    if json {
        let _ = writeln!(out, "{v}");
        return;
    }
    if let Value::Object(map) = v {
        for (k, val) in map {
            let _ = match val {
                Value::String(s) => writeln!(out, "{k}: {s}"),
                other => writeln!(out, "{k}: {other}"),
            };
        }
    }
}

fn execute(cmd: &Command) -> Result<Value> {
    match cmd {
        Command::SynthData(a) => synth(a),
        Command::Split(a) => split(a),
        Command::TrainAe(a) => train(a),
        Command::Encode(a) => codec(a, true),
        Command::Decode(a) => codec(a, false),
        Command::FitGmm(a) => fit(a),
        Command::Loglik(a) => loglik(a),
        Command::Sample(a) => sample(a),
        Command::Handoff(a) => handoff(a),
        Command::Classify(a) => classify(a, false),
        Command::Confusion(a) => classify(a, true),
        Command::Simscore(a) => simscore(a),
        Command::Llsep(a) => llsep(a),
        Command::Project(a) => project(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
    }
}

fn parse_schema(s: &str) -> Result<DemographicSchema> {
    let axes = s
        .split(';')
        .filter(|p| !p.trim().is_empty())
        .map(|part| {
            let (name, values) = part
                .split_once('=')
                .ok_or_else(|| Error::validation(format!("schema part `{part}` is not name=v1,v2")))?;
            Ok(DemographicAxis {
                name: name.trim().to_string(),
                values: values.split(',').map(|v| v.trim().to_string()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DemographicSchema::new(axes)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::validation(format!("bad {what} entry `{p}` in `{s}`")))
        })
        .collect()
}

fn is_jsonl(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "jsonl")
}

fn read_records(p: &Path) -> Result<LatentDataset> {
    if is_jsonl(p) {
        load_jsonl(p, schema_sidecar_path(p))
    } else {
        load_dataset(p)
    }
}

fn write_records(ds: &LatentDataset, p: &Path) -> Result<()> {
    if is_jsonl(p) {
        save_jsonl(ds, p)
    } else {
        save_dataset(ds, p)
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

fn synth(a: &SynthArgs) -> Result<Value> {
    let schema = parse_schema(&a.schema)?;
    let mut opts = ToyOptions::default();
    if let Some(v) = a.axis_var {
        opts.axis_var = v;
    }
    if let Some(r) = &a.nuisance_std {
        let v: Vec<f64> = parse_list(r, "nuisance range")?;
        let [lo, hi] = v[..] else {
            return Err(Error::validation("--nuisance-std takes `lo,hi`"));
        };
        opts.nuisance_std = (lo, hi);
    }
    let (ds, _) = synth_toy_dataset_with(&schema, a.n_per_group, a.sem_dim, a.dim, a.separation, a.seed, &opts)?;
    write_records(&ds, &a.out)?;
    Ok(json!({"records": ds.len(), "dim": ds.dim(), "out": path_str(&a.out)}))
}

fn split(a: &SplitArgs) -> Result<Value> {
    let ds = read_records(&a.input)?;
    let (train, test) = split_dataset(&ds, a.test_fraction, a.seed)?;
    std::fs::create_dir_all(&a.out)?;
    save_dataset(&train, a.out.join("train.latd"))?;
    save_dataset(&test, a.out.join("test.latd"))?;
    Ok(json!({"train": train.len(), "test": test.len(), "out": path_str(&a.out)}))
}

#[derive(Debug, Default, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainFile {
    autoencoder: Option<AutoencoderConfig>,
    contrastive: ContrastiveConfig,
    train: TrainConfig,
}

fn train(a: &TrainArgs) -> Result<Value> {
    let file: TrainFile = match &a.config {
        Some(p) => serde_json::from_slice(&std::fs::read(p)?)
            .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => TrainFile::default(),
    };
    let data = read_records(&a.input)?;
    let mut ae = match (&a.dims, file.autoencoder) {
        (Some(d), base) => AutoencoderConfig {
            encoder_dims: parse_list(d, "width")?,
            decoder_dims: parse_list::<usize>(d, "width")?.into_iter().rev().collect(),
            ..base.unwrap_or_default()
        },
        (None, Some(c)) => c,
        (None, None) => AutoencoderConfig::symmetric(&[data.dim(), 1024, 128]),
    };
    let mut con = file.contrastive;
    let mut tc = file.train;
    if let Some(v) = a.lr {
        ae.learning_rate = v;
    }
    if let Some(v) = a.lambda1 {
        con.lambda1 = v;
    }
    if let Some(v) = a.lambda2 {
        con.lambda2 = v;
    }
    if let Some(v) = a.alpha {
        con.alpha = v;
    }
    if let Some(v) = a.epochs {
        tc.epochs = v;
    }
    if let Some(v) = a.batch_size {
        tc.batch_size = v;
    }
    ae.init_seed = a.seed;
    tc.seed = a.seed;

    let st = if a.no_standardize { None } else { Some(Standardizer::fit(&data)?) };
    let std_data = match &st {
        Some(st) => st.apply(&data, Direction::Forward)?,
        None => data.clone(),
    };
    let mut model = Autoencoder::<f32>::new(ae)?;
    let curve = train_autoencoder(&mut model, &std_data, &con, &tc)?;
    let model = match st {
        Some(st) => model.with_standardizer(st)?,
        None => model,
    };
    save_model(&model, &a.out)?;
    if let Some(p) = &a.loss_csv {
        let axes: Vec<String> = data.schema().axes.iter().map(|x| x.name.clone()).collect();
        write_loss_csv(p, &curve, &axes)?;
    }
    let last = curve.last();
    Ok(json!({
        "steps": curve.len(),
        "final_total": last.map(|r| r.total),
        "final_recon": last.map(|r| r.recon),
        "out": path_str(&a.out),
    }))
}

fn codec(a: &CodecArgs, encode: bool) -> Result<Value> {
    let model = load_model(&a.model)?;
    let ds = read_records(&a.input)?;
    let x = ds.vectors_f64();
    let y = if encode { model.encode_raw(x.view())? } else { model.decode_raw(x.view())? };
    let out = ds.with_vectors(y.mapv(|v| v as f32))?;
    write_records(&out, &a.out)?;
    Ok(json!({"records": out.len(), "dim": out.dim(), "out": path_str(&a.out)}))
}

fn fit(a: &FitArgs) -> Result<Value> {
    let ds = read_records(&a.input)?;
    let sel: GroupSelector = a.group.parse()?;
    let cfg = EmConfig {
        components: a.components,
        max_iters: a.max_iters,
        tol: a.tol,
        floor: a.floor,
        covariance: match a.covariance {
            CovArg::Diagonal => CovarianceMode::Diagonal,
            CovArg::Full => CovarianceMode::Full,
        },
        seed: a.seed,
        restarts: a.restarts,
    };
    let (model, hist) = fit_group_gmm(&ds, &sel, &cfg)?;
    save_gmm(&model, &a.out)?;
    if let Some(p) = &a.history_csv {
        let mut w = csv::Writer::from_path(p)?;
        w.write_record(["iteration", "mean_ll"])?;
        for (i, ll) in hist.iter().enumerate() {
            w.write_record([i.to_string(), ll.to_string()])?;
        }
        w.flush()?;
    }
    Ok(json!({
        "group": sel.to_string(),
        "components": model.n_components(),
        "iterations": model.fit.iterations,
        "final_ll": model.fit.final_ll,
        "out": path_str(&a.out),
    }))
}

fn loglik(a: &LoglikArgs) -> Result<Value> {
    let ds = read_records(&a.input)?;
    let models = a.models.iter().map(load_gmm).collect::<Result<Vec<_>>>()?;
    let refs: Vec<_> = models.iter().collect();
    write_loglik_csv(&a.out, ds.ids(), ds.vectors_f64().view(), &refs)?;
    Ok(json!({"records": ds.len(), "models": models.len(), "out": path_str(&a.out)}))
}

fn sample(a: &SampleArgs) -> Result<Value> {
    let model = load_model(&a.model)?;
    let gmm = load_gmm(&a.gmm)?;
    let reference = read_records(&a.reference)?;
    let ds = run_sample_group(&model, &gmm, reference.schema(), a.n, a.seed)?;
    write_records(&ds, &a.out)?;
    Ok(json!({"group": gmm.group.to_string(), "records": ds.len(), "out": path_str(&a.out)}))
}

fn handoff(a: &HandoffArgs) -> Result<Value> {
    let ds = read_records(&a.input)?;
    let side = emit_generator_handoff(ds.vectors().view(), &a.out, a.styles)?;
    Ok(json!({
        "shape": [ds.len(), a.styles, ds.dim() / a.styles],
        "out": path_str(&a.out),
        "sidecar": path_str(&side),
    }))
}

fn classify(a: &ClassifyArgs, confusion: bool) -> Result<Value> {
    let train = read_records(&a.train)?;
    let input = read_records(&a.input)?;
    let axis = train
        .schema()
        .axis_index(&a.axis)
        .ok_or_else(|| Error::validation(format!("unknown axis `{}`", a.axis)))?;
    let values = train.schema().axes[axis].values.clone();
    let cfg = SoftmaxConfig { epochs: a.epochs, learning_rate: a.lr };
    let clf = train_softmax_classifier(train.vectors_f64().view(), &train.axis_labels(axis), values.len(), &a.axis, &cfg)?;
    let x = input.vectors_f64();
    let in_axis = input
        .schema()
        .axis_index(&a.axis)
        .ok_or_else(|| Error::validation(format!("input has no axis `{}`", a.axis)))?;
    let in_values = &input.schema().axes[in_axis].values;
    // Map input labels onto the training schema; unknown values have no truth.
    let truth: Vec<Option<u16>> = input
        .axis_labels(in_axis)
        .iter()
        .map(|&l| values.iter().position(|v| *v == in_values[l as usize]).map(|p| p as u16))
        .collect();
    let pred = clf.classify_batch(x.view())?;
    if confusion {
        let keep: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].is_some()).collect();
        if keep.is_empty() {
            return Err(Error::validation(format!("no input record has a known `{}` value", a.axis)));
        }
        let t: Vec<u16> = keep.iter().map(|&i| truth[i].unwrap()).collect();
        let p: Vec<u16> = keep.iter().map(|&i| pred[i]).collect();
        let cm = crate::eval::ConfusionMatrix::from_predictions(&a.axis, &values, &t, &p)?;
        write_confusion_csv(&a.out, &cm)?;
        return Ok(json!({"axis": a.axis, "accuracy": cm.accuracy(), "records": cm.total(), "out": path_str(&a.out)}));
    }
    let mut w = csv::Writer::from_path(&a.out)?;
    w.write_record(["id", "truth", "predicted"])?;
    for ((id, t), p) in input.ids().iter().zip(&truth).zip(&pred) {
        let t = t.map(|t| values[t as usize].clone()).unwrap_or_default();
        w.write_record([id.to_string(), t, values[*p as usize].clone()])?;
    }
    w.flush()?;
    Ok(json!({"axis": a.axis, "records": pred.len(), "out": path_str(&a.out)}))
}

fn simscore(a: &SimscoreArgs) -> Result<Value> {
    let take = |p: &Path| -> Result<ndarray::Array2<f64>> {
        let x = read_records(p)?.vectors_f64();
        let k = a.limit.unwrap_or(x.nrows()).min(x.nrows());
        Ok(x.slice_axis(Axis(0), (0..k).into()).to_owned())
    };
    let x = take(&a.input)?;
    let (mode, y) = match &a.other {
        Some(p) => (ScoreMode::Between, take(p)?),
        None => (ScoreMode::Within, x.clone()),
    };
    let d = score_distribution(&a.label, x.view(), y.view(), mode, a.bins)?;
    write_scores_csv(&a.out, &[&d])?;
    if let Some(svg) = &a.svg {
        write_histogram_svg(svg, &a.label, &[&d])?;
    }
    let (lo, hi) = d
        .scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &s| (l.min(s), h.max(s)));
    Ok(json!({"pairs": d.count(), "mean": d.mean(), "min": lo, "max": hi, "out": path_str(&a.out)}))
}

fn llsep(a: &LlsepArgs) -> Result<Value> {
    let first = load_gmm(&a.first)?;
    let second = load_gmm(&a.second)?;
    let ds = read_records(&a.input)?;
    let x1 = select_group(&ds, &first.group)?.vectors_f64();
    let x2 = select_group(&ds, &second.group)?.vectors_f64();
    let r = ll_separation(&first, &second, x1.view(), x2.view())?;
    write_llsep_csv(&a.out, &r)?;
    Ok(json!({"first": r.first, "second": r.second, "accuracy": r.accuracy, "out": path_str(&a.out)}))
}

fn project(a: &ProjectArgs) -> Result<Value> {
    let ds = read_records(&a.input)?;
    let p = pca_project(ds.vectors_f64().view(), 2.min(ds.dim()))?;
    let schema = ds.schema();
    let groups: Vec<String> = ds
        .labels()
        .outer_iter()
        .map(|l| {
            l.iter()
                .zip(&schema.axes)
                .map(|(&v, ax)| ax.values[v as usize].as_str())
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    write_projection_csv(&a.out, p.coords.view(), &groups)?;
    if let Some(svg) = &a.svg {
        write_scatter_svg(svg, "PCA projection", p.coords.view(), &groups, ["pc1", "pc2"])?;
    }
    Ok(json!({"explained": p.explained.iter().take(p.coords.ncols()).collect::<Vec<_>>(), "out": path_str(&a.out)}))
}

fn run(a: &RunArgs) -> Result<Value> {
    let mut cfg = PipelineConfig::from_json_file(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.output_dir = o.clone();
    }
    let m = run_pipeline(&cfg, a.stage.as_deref())?;
    Ok(json!({
        "manifest_hash": m.manifest_hash,
        "config_hash": m.config_hash,
        "stages": m.stages.iter().map(|s| s.name.clone()).collect::<Vec<_>>(),
        "out": path_str(&cfg.output_dir),
    }))
}

fn report(a: &ReportArgs) -> Result<Value> {
    let m = RunManifest::load(&a.out)?;
    let mut v = json!({
        "manifest_hash": m.manifest_hash,
        "config_hash": m.config_hash,
        "stages": m.stages.iter().map(|s| json!({"name": s.name, "seconds": s.seconds, "files": s.artifacts.len()})).collect::<Vec<_>>(),
    });
    if m.stage("evaluate").is_some() {
        v["summary"] = serde_json::to_value(load_summary(&a.out)?)?;
    }
    Ok(v)
}
