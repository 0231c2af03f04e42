mod common;

use std::fs;

use cmtrain::checkpoint::{load_model, Checkpoint};
use cmtrain::train::{fine_tune, post_train, read_metrics, BEST_CHECKPOINT, LAST_CHECKPOINT};
use cmtrain_core::model::Model;
use tempfile::tempdir;

#[test]
fn zero_steps_writes_the_initialization() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 1);
    let cfg = common::tiny_run(dir.path(), dir.path().join("run"), 0);
    let o = post_train(&cfg, None).unwrap();
    assert_eq!(o.final_step, 0);
    let (model, params) = load_model(&o.best_checkpoint).unwrap();
    assert_eq!(params, Model::new(cfg.model.clone()).unwrap().init::<f32>(cfg.seed));
    assert_eq!(model.config(), &cfg.model);
    let rows = read_metrics(&o.metrics).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][0], "0");
    assert_eq!(rows[0][2], "NA");
}

#[test]
fn validation_fires_at_multiples_of_the_interval() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 1);
    let cfg = common::tiny_run(dir.path(), dir.path().join("run"), 35);
    let o = post_train(&cfg, None).unwrap();
    let steps: Vec<String> = read_metrics(&o.metrics).unwrap().into_iter().map(|r| r[0].clone()).collect();
    assert_eq!(steps, ["0", "10", "20", "30"]);
    assert_eq!(Checkpoint::load(&o.last_checkpoint).unwrap().step, 35);
}

#[test]
fn identical_configs_give_identical_files() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 2);
    let a = post_train(&common::tiny_run(dir.path(), dir.path().join("a"), 20), None).unwrap();
    let b = post_train(&common::tiny_run(dir.path(), dir.path().join("b"), 20), None).unwrap();
    for name in [BEST_CHECKPOINT, LAST_CHECKPOINT, "metrics.tsv"] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap(), "{name}");
    }
    assert_eq!(a.best_val_loss, b.best_val_loss);
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 4);
    let full = post_train(&common::tiny_run(dir.path(), dir.path().join("full"), 50), None).unwrap();
    let half = post_train(&common::tiny_run(dir.path(), dir.path().join("half"), 25), None).unwrap();
    let resumed = post_train(&common::tiny_run(dir.path(), dir.path().join("half"), 50), Some(&half.last_checkpoint)).unwrap();
    assert_eq!(resumed.final_step, 50);
    assert_eq!(fs::read(&full.last_checkpoint).unwrap(), fs::read(&resumed.last_checkpoint).unwrap());
    assert_eq!(fs::read(&full.best_checkpoint).unwrap(), fs::read(&resumed.best_checkpoint).unwrap());
}

#[test]
fn schedule_past_its_end_is_rejected() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 1);
    let cfg = common::tiny_run(dir.path(), dir.path().join("run"), 5_501);
    assert!(format!("{:#}", post_train(&cfg, None).unwrap_err()).contains("exceeds"));
}

#[test]
fn zero_step_fine_tune_keeps_parameters() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 1);
    let base = post_train(&common::tiny_run(dir.path(), dir.path().join("base"), 10), None).unwrap();
    let mut ft = common::tiny_run(dir.path(), dir.path().join("ft"), 0);
    ft.schedule.preset = None;
    let o = fine_tune(&base.best_checkpoint, &ft).unwrap();
    assert_eq!(load_model(&o.best_checkpoint).unwrap().1, load_model(&base.best_checkpoint).unwrap().1);
}

#[test]
fn fine_tune_runs_at_constant_learning_rate() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 1);
    let base = post_train(&common::tiny_run(dir.path(), dir.path().join("base"), 5), None).unwrap();
    let mut ft = common::tiny_run(dir.path(), dir.path().join("ft"), 20);
    ft.schedule.preset = None;
    let o = fine_tune(&base.best_checkpoint, &ft).unwrap();
    for row in read_metrics(&o.metrics).unwrap() {
        assert_eq!(row[1].parse::<f64>().unwrap(), 1e-6);
    }
    assert_ne!(load_model(&o.last_checkpoint).unwrap().1, load_model(&base.best_checkpoint).unwrap().1);
}

#[test]
fn fine_tune_rejects_a_different_model() {
    let dir = tempdir().unwrap();
    common::tiny_corpus(dir.path(), 1);
    let base = post_train(&common::tiny_run(dir.path(), dir.path().join("base"), 0), None).unwrap();
    let mut ft = common::tiny_run(dir.path(), dir.path().join("ft"), 0);
    ft.model.ff_dim = 32;
    let err = format!("{:#}", fine_tune(&base.best_checkpoint, &ft).unwrap_err());
    assert!(err.contains("fingerprint"), "{err}");
}

#[test]
fn missing_audio_is_reported_before_training() {
    let dir = tempdir().unwrap();
    let m = common::tiny_corpus(dir.path(), 1);
    fs::remove_file(dir.path().join(&m.entries()[0].path)).unwrap();
    let cfg = common::tiny_run(dir.path(), dir.path().join("run"), 1);
    let err = format!("{:#}", post_train(&cfg, None).unwrap_err());
    assert!(err.contains(&m.entries()[0].id), "{err}");
}
