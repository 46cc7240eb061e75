mod common;

use std::collections::BTreeSet;
use std::fs;

use latmod::dataset::{save_dataset, synth_toy_dataset, DemographicSchema};
use latmod::pipeline::{
    load_summary, read_generator_handoff, run_full_pipeline, run_pipeline, DataSource, RunManifest, MANIFEST_FILE,
};
use latmod::Error;

fn recorded(m: &RunManifest) -> BTreeSet<String> {
    m.artifacts().map(|a| a.path.clone()).collect()
}

#[test]
fn every_file_is_recorded_and_nothing_else_exists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(&dir.path().join("run"));
    let m = run_full_pipeline(&cfg).unwrap();
    let mut on_disk = common::files_under(&cfg.output_dir);
    assert!(on_disk.remove(MANIFEST_FILE));
    assert_eq!(on_disk, recorded(&m));
    assert_eq!(m.manifest_hash, m.compute_hash());
    assert_eq!(RunManifest::load(&cfg.output_dir).unwrap(), m);

    let s = load_summary(&cfg.output_dir).unwrap();
    assert_eq!(s.ll_separation.len(), 6);
    assert_eq!(s.scores.len(), 4);
    for g in &s.scores {
        assert!(g.min_score >= -2.0 && g.max_score <= 0.0);
        assert_eq!(g.max_abs_self_score, 0.0);
    }
}

#[test]
fn deleted_artifact_reruns_downstream_with_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(&dir.path().join("run"));
    let first = run_full_pipeline(&cfg).unwrap();
    let model_before = fs::read(cfg.output_dir.join("model/autoencoder.lmae")).unwrap();
    let train_secs = first.stage("train").unwrap().seconds;

    let victim = first.stage("gmm").unwrap().artifacts[0].path.clone();
    fs::remove_file(cfg.output_dir.join(&victim)).unwrap();
    fs::remove_dir_all(cfg.output_dir.join("samples")).unwrap();
    let second = run_full_pipeline(&cfg).unwrap();

    assert_eq!(second.manifest_hash, first.manifest_hash);
    assert!(cfg.output_dir.join(&victim).is_file());
    // Upstream stages were reused, not recomputed.
    assert_eq!(second.stage("train").unwrap().seconds, train_secs);
    assert_eq!(fs::read(cfg.output_dir.join("model/autoencoder.lmae")).unwrap(), model_before);
}

#[test]
fn tampered_artifact_is_detected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::small_config(&dir.path().join("run"));
    let first = run_full_pipeline(&cfg).unwrap();
    let codes = cfg.output_dir.join("codes/test.latd");
    let mut bytes = fs::read(&codes).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 1;
    fs::write(&codes, bytes).unwrap();
    let second = run_full_pipeline(&cfg).unwrap();
    assert_eq!(second.manifest_hash, first.manifest_hash);
}

#[test]
fn partial_run_then_resume_matches_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let staged = common::small_config(&dir.path().join("staged"));
    let m = run_pipeline(&staged, Some("encode")).unwrap();
    assert_eq!(m.stages.len(), 4);
    assert!(!staged.output_dir.join("gmm").exists());
    let resumed = run_full_pipeline(&staged).unwrap();

    let whole = common::small_config(&dir.path().join("whole"));
    let full = run_full_pipeline(&whole).unwrap();
    assert_eq!(resumed.manifest_hash, full.manifest_hash);
}

#[test]
fn config_change_discards_stale_groups() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::small_config(&dir.path().join("run"));
    run_full_pipeline(&cfg).unwrap();
    assert!(cfg.output_dir.join("gmm/female_a.lgmm").is_file());

    cfg.groups = vec!["gender=female".into(), "gender=male".into()];
    cfg.handoff_styles = Some(4);
    let m = run_full_pipeline(&cfg).unwrap();
    let mut on_disk = common::files_under(&cfg.output_dir);
    on_disk.remove(MANIFEST_FILE);
    assert_eq!(on_disk, recorded(&m));
    assert!(!cfg.output_dir.join("gmm/female_a.lgmm").exists());
    assert!(cfg.output_dir.join("gmm/female.lgmm").is_file());

    let (data, side) = read_generator_handoff(cfg.output_dir.join("samples/female.f32")).unwrap();
    assert_eq!(side.shape, [cfg.samples_per_group, 4, 3]);
    assert_eq!(data.len(), cfg.samples_per_group * 12);
}

#[test]
fn failing_stage_is_named_and_keeps_earlier_work() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = common::small_config(&dir.path().join("run"));
    // More components than records in any single training group.
    cfg.em.components = 500;
    match run_full_pipeline(&cfg) {
        Err(Error::Stage { stage, .. }) => assert_eq!(stage, "gmm"),
        other => panic!("expected a gmm stage error, got {other:?}"),
    }
    let m = RunManifest::load(&cfg.output_dir).unwrap();
    let names: Vec<_> = m.stages.iter().map(|s| s.name.as_str()).collect();
    assert_eq!(names, ["data", "split", "train", "encode"]);
    assert!(cfg.output_dir.join("model/autoencoder.lmae").is_file());
}

#[test]
fn latd_source_is_tracked_by_content() {
    let dir = tempfile::tempdir().unwrap();
    let schema = DemographicSchema::from_pairs(&[("gender", &["female", "male"]), ("race", &["a", "b"])]).unwrap();
    let input = dir.path().join("input.latd");
    let (ds, _) = synth_toy_dataset(&schema, 40, 3, 12, 4.0, 9).unwrap();
    save_dataset(&ds, &input).unwrap();

    let mut cfg = common::small_config(&dir.path().join("run"));
    cfg.data = DataSource::Latd { path: input.clone() };
    let first = run_full_pipeline(&cfg).unwrap();
    assert!(first.stage("data").unwrap().input_sha256.is_some());
    assert_eq!(run_full_pipeline(&cfg).unwrap().manifest_hash, first.manifest_hash);

    let (other, _) = synth_toy_dataset(&schema, 40, 3, 12, 4.0, 10).unwrap();
    save_dataset(&other, &input).unwrap();
    let changed = run_full_pipeline(&cfg).unwrap();
    assert_ne!(changed.manifest_hash, first.manifest_hash);
    assert_ne!(changed.stage("data").unwrap().input_sha256, first.stage("data").unwrap().input_sha256);
}

#[test]
fn wrong_input_width_fails_in_data_stage() {
    let dir = tempfile::tempdir().unwrap();
    let schema = DemographicSchema::from_pairs(&[("gender", &["female", "male"]), ("race", &["a", "b"])]).unwrap();
    let input = dir.path().join("input.latd");
    let (ds, _) = synth_toy_dataset(&schema, 10, 2, 8, 4.0, 1).unwrap();
    save_dataset(&ds, &input).unwrap();
    let mut cfg = common::small_config(&dir.path().join("run"));
    cfg.data = DataSource::Latd { path: input };
    let err = run_full_pipeline(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1, "{err}");
    assert!(!cfg.output_dir.join("model").exists());
}

#[test]
fn standardization_can_be_switched_off() {
    let dir = tempfile::tempdir().unwrap();
    let on = common::small_config(&dir.path().join("on"));
    let off = latmod::pipeline::PipelineConfig {
        standardize: false,
        ..common::small_config(&dir.path().join("off"))
    };
    assert_ne!(on.config_hash(), off.config_hash());
    run_full_pipeline(&on).unwrap();
    run_full_pipeline(&off).unwrap();
    let model = |c: &latmod::pipeline::PipelineConfig| {
        latmod::autoencoder::load_model(c.output_dir.join("model/autoencoder.lmae")).unwrap()
    };
    assert!(model(&on).standardizer.is_some());
    assert!(model(&off).standardizer.is_none());
    assert!(load_summary(&off.output_dir).unwrap().reconstruction_error.is_finite());
}
