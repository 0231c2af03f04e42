//! Duration-bucketed dynamic batching.
//!
//! Entries are grouped into fixed-width duration buckets, shuffled inside
//! each bucket, and packed greedily under a total-seconds budget. A batch
//! never spans two buckets, so padding per row stays below one bucket width.
//! Long files are budgeted at the trim ceiling because their actual crop
//! length is only drawn when the batch is assembled.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::catalog::Manifest;
use crate::num::Real;
use crate::rng::substream;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatcherConfig {
    pub max_batch_seconds: f64,
    pub bucket_width_s: f64,
    /// Files strictly longer than this are cropped.
    pub trim_threshold_s: f64,
    pub trim_min_s: f64,
    pub trim_max_s: f64,
}

impl Default for BatcherConfig {
    fn default() -> Self {
        BatcherConfig {
            max_batch_seconds: 100.0,
            bucket_width_s: 1.0,
            trim_threshold_s: 13.0,
            trim_min_s: 10.0,
            trim_max_s: 13.0,
        }
    }
}

impl BatcherConfig {
    /// Budget used for the largest model regime.
    pub fn large_model() -> Self {
        BatcherConfig {
            max_batch_seconds: 50.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trim_min_s > 0.0 && self.trim_min_s <= self.trim_max_s && self.trim_max_s <= self.trim_threshold_s) {
            return Err(Error::InvalidConfig("trim range must satisfy 0 < min <= max <= threshold".into()));
        }
        if !(self.max_batch_seconds >= self.trim_threshold_s) {
            return Err(Error::InvalidConfig(alloc::format!(
                "max_batch_seconds {} is below the trim ceiling {}",
                self.max_batch_seconds,
                self.trim_threshold_s
            )));
        }
        if !(self.bucket_width_s > 0.0) {
            return Err(Error::InvalidConfig("bucket_width_s must be positive".into()));
        }
        Ok(())
    }

    /// Seconds an entry is charged against the batch budget.
    pub fn effective_seconds(&self, duration_s: f64) -> f64 {
        if duration_s > self.trim_threshold_s {
            self.trim_max_s
        } else {
            duration_s
        }
    }
}

/// Randomly crops buffers longer than the threshold to a length drawn
/// uniformly from `[trim_min_s, trim_max_s]`; shorter buffers pass through.
pub fn trim<R: Rng + ?Sized>(x: &AudioBuffer, cfg: &BatcherConfig, rng: &mut R) -> AudioBuffer {
    let sr = x.sample_rate as f64;
    let n = x.samples.len();
    if n as f64 / sr <= cfg.trim_threshold_s {
        return x.clone();
    }
    let lo = libm::ceil(cfg.trim_min_s * sr) as usize;
    let hi = (libm::floor(cfg.trim_max_s * sr) as usize).min(n);
    let len = rng.random_range(lo..=hi.max(lo));
    let offset = rng.random_range(0..=n - len);
    AudioBuffer::mono(x.samples[offset..offset + len].to_vec(), x.sample_rate)
}

/// Trim offsets are redrawn every epoch from `(seed, epoch, id)`.
pub fn trim_for_epoch(x: &AudioBuffer, cfg: &BatcherConfig, seed: u64, epoch: u64, id: &str) -> AudioBuffer {
    trim(x, cfg, &mut substream(seed, "trim", &[epoch, crate::rng::id_key(id)]))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BatchPlan {
    pub batches: Vec<Vec<String>>,
    pub seed: u64,
    pub epoch: u64,
}

impl BatchPlan {
    pub fn len(&self) -> usize {
        self.batches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.batches.is_empty()
    }
}

/// Plans one pass over every entry of `m`.
pub fn plan_epoch(m: &Manifest, cfg: &BatcherConfig, seed: u64, epoch: u64) -> Result<BatchPlan> {
    cfg.validate()?;
    let mut keyed: Vec<(u64, usize, f64)> = Vec::with_capacity(m.len());
    for (i, e) in m.entries().iter().enumerate() {
        let eff = cfg.effective_seconds(e.duration_s);
        if eff > cfg.max_batch_seconds {
            return Err(Error::OverBudget {
                id: e.id.clone(),
                seconds: eff,
                budget: cfg.max_batch_seconds,
            });
        }
        let bucket = libm::floor(eff / cfg.bucket_width_s) as u64;
        keyed.push((bucket, i, eff));
    }
    // Stable sort keeps manifest order inside a bucket before shuffling.
    keyed.sort_by_key(|k| k.0);

    let mut rng = substream(seed, "plan", &[epoch]);
    let mut batches: Vec<Vec<String>> = Vec::new();
    let mut start = 0;
    while start < keyed.len() {
        let bucket = keyed[start].0;
        let end = start + keyed[start..].iter().take_while(|k| k.0 == bucket).count();
        let members = &mut keyed[start..end];
        members.shuffle(&mut rng);
        let mut current: Vec<String> = Vec::new();
        let mut used = 0.0;
        for &(_, i, eff) in members.iter() {
            if !current.is_empty() && used + eff > cfg.max_batch_seconds {
                batches.push(core::mem::take(&mut current));
                used = 0.0;
            }
            current.push(m.entries()[i].id.clone());
            used += eff;
        }
        if !current.is_empty() {
            batches.push(current);
        }
        start = end;
    }
    batches.shuffle(&mut rng);
    Ok(BatchPlan { batches, seed, epoch })
}

/// Zero-padded rows with validity masks, row-major `B x width`.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedBatch<T = f32> {
    pub waveforms: Vec<T>,
    pub mask: Vec<bool>,
    pub lengths: Vec<usize>,
    pub width: usize,
    pub labels: Vec<usize>,
    pub ids: Vec<String>,
}

impl<T: Real> PaddedBatch<T> {
    pub fn from_rows(rows: &[Vec<T>], labels: Vec<usize>, ids: Vec<String>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Empty);
        }
        if labels.len() != rows.len() || ids.len() != rows.len() {
            return Err(Error::Shape("rows, labels and ids differ in length".into()));
        }
        let width = rows.iter().map(Vec::len).max().unwrap_or(0);
        let mut waveforms = alloc::vec![T::zero(); rows.len() * width];
        let mut mask = alloc::vec![false; rows.len() * width];
        for (b, r) in rows.iter().enumerate() {
            waveforms[b * width..b * width + r.len()].copy_from_slice(r);
            mask[b * width..b * width + r.len()].iter_mut().for_each(|m| *m = true);
        }
        Ok(PaddedBatch {
            waveforms,
            mask,
            lengths: rows.iter().map(Vec::len).collect(),
            width,
            labels,
            ids,
        })
    }

    pub fn rows(&self) -> usize {
        self.lengths.len()
    }

    pub fn row(&self, b: usize) -> &[T] {
        &self.waveforms[b * self.width..(b + 1) * self.width]
    }

    pub fn valid_seconds(&self, sample_rate: u32) -> f64 {
        self.lengths.iter().sum::<usize>() as f64 / sample_rate as f64
    }
}

/// Stacks 16 kHz mono buffers into a padded batch.
pub fn collate(buffers: &[AudioBuffer], labels: Vec<usize>, ids: Vec<String>) -> Result<PaddedBatch<f32>> {
    if buffers.is_empty() {
        return Err(Error::Empty);
    }
    for b in buffers {
        b.require_preprocessed()?;
    }
    let rows: Vec<Vec<f32>> = buffers.iter().map(|b| b.samples.clone()).collect();
    PaddedBatch::from_rows(&rows, labels, ids)
}
