//! Post-training and fine-tuning loops.
//!
//! A run is a pure function of its config: batch `s` is fixed by the epoch
//! plans derived from `(seed, epoch)`, trims by `(seed, epoch, id)` and
//! augmentation by `(seed, s, id)`. Resuming from a checkpoint therefore only
//! needs the parameters, the AdamW moments and the step counter.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use cmtrain_core::augment::augment_for_training;
use cmtrain_core::batcher::{collate, plan_epoch, trim_for_epoch, BatchPlan, PaddedBatch};
use cmtrain_core::catalog::{split_manifest, Manifest, ManifestEntry, Split};
use cmtrain_core::eval::{compute_eer, ScoreRecord};
use cmtrain_core::model::{accumulate, cross_entropy, score, Model};
use cmtrain_core::optim::{OptimizerState, Schedule};
use cmtrain_core::rng::{id_key, substream};
use cmtrain_core::SAMPLE_RATE;
use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, ModelState};
use crate::config::{RunConfig, DEFAULT_FINE_TUNE_STEPS};
use crate::evaluate::label_of;
use crate::manifest::{check_paths, load_entry, read_manifests};

pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";
pub const METRICS_FILE: &str = "metrics.tsv";
pub const METRICS_HEADER: &str = "step\tlr\ttrain_loss\tval_loss\tval_eer";

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub best_checkpoint: PathBuf,
    pub last_checkpoint: PathBuf,
    pub metrics: PathBuf,
    pub final_step: u64,
    pub best_val_loss: f32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Validation {
    /// Mean per-file cross entropy.
    pub loss: f32,
    /// `None` when the validation set holds a single class.
    pub eer: Option<f64>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    model: Model,
    schedule: Schedule,
    total_steps: u64,
    train: Manifest,
    val: Manifest,
}

/// Post-trains from a fresh initialization, or continues the run stored in
/// `resume`.
pub fn post_train(cfg: &RunConfig, resume: Option<&Path>) -> Result<TrainOutcome> {
    cfg.validate()?;
    let schedule = cfg.schedule.resolve("post_train")?;
    let total_steps = cfg.total_steps.unwrap_or_else(|| schedule.end_step());
    if !schedule.constant && total_steps > schedule.end_step() {
        bail!(
            "total_steps {total_steps} exceeds warmup + decay = {}; the learning rate would be zero",
            schedule.end_step()
        );
    }
    let all = read_manifests(&cfg.manifests)?;
    let train = all.filter_split(Split::Train);
    let val = all.filter_split(Split::Val);
    ensure!(!train.is_empty(), "the manifests contain no train entries");
    ensure!(!val.is_empty(), "the manifests contain no val entries");
    let model = Model::new(cfg.model.clone())?;

    let (state, fresh) = match resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            check_fingerprint(&ck, cfg)?;
            let (_, state) = ModelState::from_checkpoint(&ck, cfg.optimizer)?;
            ensure!(state.optimizer.is_some(), "`{}` holds no optimizer moments to resume from", path.display());
            ensure!(state.step <= total_steps, "checkpoint step {} is past total_steps {total_steps}", state.step);
            (state, false)
        }
        None => {
            let params = model.init::<f32>(cfg.seed);
            let optimizer = Some(OptimizerState::new(cfg.optimizer, params.len()));
            let state = ModelState {
                config: cfg.model.clone(),
                params,
                optimizer,
                step: 0,
                best_val_loss: None,
            };
            (state, true)
        }
    };
    let run = Run {
        cfg,
        model,
        schedule,
        total_steps,
        train,
        val,
    };
    run.execute(state, fresh)
}

/// Adapts a post-trained checkpoint to the target domain: a seeded split of
/// the train entries for optimization and validation, constant learning rate
/// and fresh optimizer moments.
pub fn fine_tune(from: &Path, cfg: &RunConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let schedule = cfg.schedule.resolve("fine_tune")?;
    let total_steps = cfg.total_steps.unwrap_or(DEFAULT_FINE_TUNE_STEPS);
    let ck = Checkpoint::load(from)?;
    check_fingerprint(&ck, cfg)?;
    let (model, loaded) = ModelState::from_checkpoint(&ck, cfg.optimizer)?;

    let target = read_manifests(&cfg.manifests)?.filter_split(Split::Train);
    ensure!(!target.is_empty(), "the manifests contain no train entries to fine-tune on");
    let (train, val) = split_manifest(&target, cfg.fine_tune.train_fraction, cfg.seed)?;
    ensure!(!val.is_empty(), "the fine-tuning split leaves no validation entries");

    let state = ModelState {
        config: loaded.config,
        optimizer: Some(OptimizerState::new(cfg.optimizer, loaded.params.len())),
        params: loaded.params,
        step: 0,
        best_val_loss: None,
    };
    let run = Run {
        cfg,
        model,
        schedule,
        total_steps,
        train,
        val,
    };
    run.execute(state, true)
}

fn check_fingerprint(ck: &Checkpoint, cfg: &RunConfig) -> Result<()> {
    let want = cfg.model.fingerprint();
    ensure!(
        ck.fingerprint == want,
        "checkpoint config fingerprint {:016x} does not match the run's model config {want:016x}",
        ck.fingerprint
    );
    Ok(())
}

/// Position of training step `step` (0-based) in the epoch sequence.
struct Cursor {
    epoch: u64,
    index: usize,
    plan: BatchPlan,
}

impl Cursor {
    fn seek(train: &Manifest, cfg: &RunConfig, step: u64) -> Result<Self> {
        let mut remaining = step;
        let mut epoch = 0;
        loop {
            let plan = plan_epoch(train, &cfg.batcher, cfg.seed, epoch)?;
            if remaining < plan.len() as u64 {
                return Ok(Cursor {
                    epoch,
                    index: remaining as usize,
                    plan,
                });
            }
            remaining -= plan.len() as u64;
            epoch += 1;
        }
    }

    fn advance(&mut self, train: &Manifest, cfg: &RunConfig) -> Result<()> {
        self.index += 1;
        if self.index == self.plan.len() {
            self.epoch += 1;
            self.index = 0;
            self.plan = plan_epoch(train, &cfg.batcher, cfg.seed, self.epoch)?;
        }
        Ok(())
    }
}

impl Run<'_> {
    fn out(&self, name: &str) -> PathBuf {
        self.cfg.out_dir.join(name)
    }

    fn check_entries(&self) -> Result<()> {
        let field = self.model.config().receptive_field();
        for e in self.train.entries().iter().chain(self.val.entries()) {
            let samples = (e.duration_s * SAMPLE_RATE as f64).round() as usize;
            ensure!(
                samples >= field,
                "entry `{}` is {:.4} s long, shorter than the model's {field}-sample receptive field",
                e.id,
                e.duration_s
            );
        }
        check_paths(&self.train, Path::new(""))?;
        check_paths(&self.val, Path::new(""))
    }

    fn execute(&self, mut state: ModelState, fresh: bool) -> Result<TrainOutcome> {
        self.check_entries()?;
        fs::create_dir_all(&self.cfg.out_dir)
            .with_context(|| format!("cannot create `{}`", self.cfg.out_dir.display()))?;
        let metrics_path = self.out(METRICS_FILE);
        let mut metrics = if fresh {
            let mut f = fs::File::create(&metrics_path)?;
            writeln!(f, "{METRICS_HEADER}")?;
            f
        } else {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&metrics_path)
                .with_context(|| format!("cannot append to `{}`", metrics_path.display()))?;
            if f.metadata()?.len() == 0 {
                writeln!(f, "{METRICS_HEADER}")?;
            }
            f
        };

        if fresh {
            let v = self.validate(&state.params)?;
            self.record(&mut metrics, &mut state, 0, None, v)?;
        }

        let by_id: HashMap<&str, &ManifestEntry> = self.train.entries().iter().map(|e| (e.id.as_str(), e)).collect();
        let mut cursor = Cursor::seek(&self.train, self.cfg, state.step)?;
        let (mut loss_sum, mut rows_seen) = (0.0f64, 0usize);
        let mut saved_step = state.step;

        while state.step < self.total_steps {
            let step = state.step;
            let t = step + 1;
            let batch = self.assemble(&cursor, step, &by_id)?;
            let (loss, mut grads) = self.gradients(&state.params, &batch)?;
            if !loss.is_finite() {
                return Err(self.diverged(t, saved_step, "non-finite training loss"));
            }
            if let Some(c) = self.cfg.grad_clip {
                clip_global_norm(&mut grads, c);
            }
            let lr = self.schedule.lr_at(t);
            let layout = self.model.layout();
            let opt = state.optimizer.as_mut().expect("training state carries moments");
            if let Err(e) = opt.step(&mut state.params, &grads, lr, |i| layout.describe(i)) {
                return Err(self.diverged(t, saved_step, &e.to_string()));
            }
            state.step = t;
            loss_sum += loss as f64;
            rows_seen += batch.rows();
            cursor.advance(&self.train, self.cfg)?;

            if t % self.cfg.validation_interval == 0 {
                let v = self.validate(&state.params)?;
                let train_loss = (loss_sum / rows_seen as f64) as f32;
                self.record(&mut metrics, &mut state, t, Some(train_loss), v)?;
                saved_step = t;
                loss_sum = 0.0;
                rows_seen = 0;
            }
        }
        if saved_step != state.step || !self.out(LAST_CHECKPOINT).exists() {
            state.to_checkpoint(&self.model).save(&self.out(LAST_CHECKPOINT))?;
        }
        Ok(TrainOutcome {
            best_checkpoint: self.out(BEST_CHECKPOINT),
            last_checkpoint: self.out(LAST_CHECKPOINT),
            metrics: metrics_path,
            final_step: state.step,
            best_val_loss: state.best_val_loss.unwrap_or(f32::NAN),
        })
    }

    fn diverged(&self, step: u64, saved: u64, why: &str) -> anyhow::Error {
        anyhow::anyhow!(
            "training diverged at step {step} ({why}); last good checkpoint is `{}` at step {saved}",
            self.out(LAST_CHECKPOINT).display()
        )
    }

    /// Load, trim and augment every row of the current batch.
    fn assemble(&self, cursor: &Cursor, step: u64, by_id: &HashMap<&str, &ManifestEntry>) -> Result<PaddedBatch<f32>> {
        let ids = &cursor.plan.batches[cursor.index];
        let seed = self.cfg.seed;
        let rows: Vec<Result<_>> = ids
            .par_iter()
            .map(|id| {
                let e = by_id[id.as_str()];
                let buf = load_entry(Path::new(""), e)?;
                let trimmed = trim_for_epoch(&buf, &self.cfg.batcher, seed, cursor.epoch, id);
                let mut rng = substream(seed, "rawboost", &[step, id_key(id)]);
                let aug = augment_for_training(&trimmed, &self.cfg.rawboost, &mut rng)?;
                Ok((aug, self.model.config().class_of(e.category)))
            })
            .collect();
        let mut buffers = Vec::with_capacity(ids.len());
        let mut labels = Vec::with_capacity(ids.len());
        for r in rows {
            let (b, y) = r?;
            buffers.push(b);
            labels.push(y);
        }
        Ok(collate(&buffers, labels, ids.clone())?)
    }

    /// Summed loss and gradients. Rows run in parallel; the reduction is in
    /// row order so the result does not depend on the thread count.
    fn gradients(&self, params: &[f32], batch: &PaddedBatch<f32>) -> Result<(f32, Vec<f32>)> {
        let per_row: Vec<Result<(f32, Vec<f32>)>> = (0..batch.rows())
            .into_par_iter()
            .map(|b| {
                Ok(self
                    .model
                    .row_loss_and_grads(params, batch.row(b), batch.lengths[b], batch.labels[b])?)
            })
            .collect();
        let mut total = vec![0.0f32; params.len()];
        let mut loss = 0.0f32;
        for r in per_row {
            let (l, g) = r?;
            loss += l;
            accumulate(&mut total, &g);
        }
        Ok((loss, total))
    }

    /// Whole-file validation without augmentation.
    fn validate(&self, params: &[f32]) -> Result<Validation> {
        let per_file: Vec<Result<(f32, ScoreRecord)>> = self
            .val
            .entries()
            .par_iter()
            .map(|e| {
                let buf = load_entry(Path::new(""), e)?;
                let y = self.model.config().class_of(e.category);
                let batch = PaddedBatch::from_rows(&[buf.samples], vec![y], vec![e.id.clone()])?;
                let logits = self.model.logits(params, &batch)?;
                let (loss, _) = cross_entropy(&logits, &[y])?;
                let rec = ScoreRecord {
                    file_id: e.id.clone(),
                    segment_index: -1,
                    score: score(&logits)[0] as f64,
                    label: label_of(e),
                };
                Ok((loss, rec))
            })
            .collect();
        let mut sum = 0.0f64;
        let mut records = Vec::with_capacity(per_file.len());
        for r in per_file {
            let (l, rec) = r?;
            sum += l as f64;
            records.push(rec);
        }
        let eer = compute_eer(&records).ok().map(|r| r.eer);
        Ok(Validation {
            loss: (sum / records.len() as f64) as f32,
            eer,
        })
    }

    /// Appends a metrics row and refreshes the checkpoints.
    fn record(&self, metrics: &mut fs::File, state: &mut ModelState, step: u64, train_loss: Option<f32>, v: Validation) -> Result<()> {
        let lr = self.schedule.lr_at(step);
        let fmt = |x: Option<String>| x.unwrap_or_else(|| "NA".into());
        writeln!(
            metrics,
            "{step}\t{lr}\t{}\t{}\t{}",
            fmt(train_loss.map(|l| l.to_string())),
            v.loss,
            fmt(v.eer.map(|e| e.to_string()))
        )?;
        metrics.flush()?;
        log::info!(
            "step {step}: lr {lr:.3e} train_loss {} val_loss {:.5} val_eer {}",
            fmt(train_loss.map(|l| format!("{l:.5}"))),
            v.loss,
            fmt(v.eer.map(|e| format!("{:.4}", e)))
        );
        let improved = state.best_val_loss.map_or(true, |b| v.loss < b);
        if improved {
            state.best_val_loss = Some(v.loss);
        }
        let ck = state.to_checkpoint(&self.model);
        if improved {
            ck.save(&self.out(BEST_CHECKPOINT))?;
        }
        ck.save(&self.out(LAST_CHECKPOINT))
    }
}

/// Scales `g` so its L2 norm is at most `max_norm`.
pub fn clip_global_norm(g: &mut [f32], max_norm: f64) {
    let norm = g.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = (max_norm / norm) as f32;
        g.iter_mut().for_each(|v| *v *= s);
    }
}

/// Reads `metrics.tsv` rows as `(step, lr, train_loss, val_loss, val_eer)`
/// strings, header excluded.
pub fn read_metrics(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let mut lines = text.lines();
    ensure!(lines.next() == Some(METRICS_HEADER), "`{}` lacks the metrics header", path.display());
    Ok(lines.map(|l| l.split('\t').map(str::to_string).collect()).collect())
}
