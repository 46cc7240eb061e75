#![allow(dead_code)]

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use latmod::autoencoder::AutoencoderConfig;
use latmod::contrastive::TrainConfig;
use latmod::eval::SoftmaxConfig;
use latmod::gmm::EmConfig;
use latmod::pipeline::{EvalConfig, PipelineConfig};

/// A run that finishes in a couple of seconds: 12-dimensional toy data,
/// a 12-16-4 autoencoder and two-component mixtures.
pub fn small_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        output_dir: out.to_path_buf(),
        seed: 3,
        autoencoder: AutoencoderConfig::symmetric(&[12, 16, 4]),
        train: TrainConfig { epochs: 5, batch_size: 32, seed: 0 },
        em: EmConfig { components: 2, max_iters: 50, ..EmConfig::default() },
        samples_per_group: 40,
        evaluation: EvalConfig {
            score_samples: 20,
            score_bins: 20,
            classifier: SoftmaxConfig { epochs: 30, ..SoftmaxConfig::default() },
            ..EvalConfig::default()
        },
        ..PipelineConfig::default()
    };
    if let latmod::pipeline::DataSource::Synth { n_per_group, sem_dim, dim, .. } = &mut cfg.data {
        *n_per_group = 40;
        *sem_dim = 3;
        *dim = 12;
    }
    cfg
}

/// Every regular file under `root`, as sorted `/`-separated relative paths.
pub fn files_under(root: &Path) -> BTreeSet<String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeSet<String>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p: PathBuf = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap();
                out.insert(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
            }
        }
    }
    let mut out = BTreeSet::new();
    walk(root, root, &mut out);
    out
}
