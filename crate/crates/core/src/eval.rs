//! Equal error rate over genuine-posterior scores.
//!
//! Higher scores mean "more genuine". For a threshold `t`, genuine trials
//! scoring below `t` are false rejections and fake trials scoring at or
//! above `t` are false acceptances. The EER is read off the ROC where the two
//! rates cross, interpolating linearly between adjacent operating points.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

pub const LABEL_GENUINE: u8 = 1;
pub const LABEL_FAKE: u8 = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreRecord {
    pub file_id: String,
    /// `-1` for whole-file scoring.
    pub segment_index: i64,
    pub score: f64,
    pub label: u8,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EerResult {
    pub eer: f64,
    pub threshold: f64,
    pub n_genuine: usize,
    pub n_fake: usize,
}

pub fn compute_eer(records: &[ScoreRecord]) -> Result<EerResult> {
    let genuine: Vec<f64> = records.iter().filter(|r| r.label == LABEL_GENUINE).map(|r| r.score).collect();
    let fake: Vec<f64> = records.iter().filter(|r| r.label != LABEL_GENUINE).map(|r| r.score).collect();
    eer_from_scores(&genuine, &fake)
}

/// EER from separate genuine and fake score lists.
pub fn eer_from_scores(genuine: &[f64], fake: &[f64]) -> Result<EerResult> {
    if genuine.is_empty() || fake.is_empty() {
        return Err(Error::SingleClass {
            genuine: genuine.len(),
            fake: fake.len(),
        });
    }
    if genuine.iter().chain(fake).any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores".into()));
    }
    let mut all: Vec<(f64, bool)> = genuine
        .iter()
        .map(|&s| (s, true))
        .chain(fake.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    let ng = genuine.len() as f64;
    let nf = fake.len() as f64;
    // Operating point k: threshold at the k-th distinct score (all scores
    // >= it accepted), plus a final point above every score.
    let mut thresholds = Vec::new();
    let mut frr = Vec::new();
    let mut far = Vec::new();
    let (mut g_below, mut f_below) = (0usize, 0usize);
    let mut i = 0;
    while i < all.len() {
        let s = all[i].0;
        thresholds.push(s);
        frr.push(g_below as f64 / ng);
        far.push(1.0 - f_below as f64 / nf);
        while i < all.len() && all[i].0 == s {
            if all[i].1 {
                g_below += 1;
            } else {
                f_below += 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::INFINITY);
    frr.push(1.0);
    far.push(0.0);

    // d = frr - far is non-decreasing: -1 at the first point, +1 at the last.
    for k in 0..thresholds.len() {
        let d = frr[k] - far[k];
        if d == 0.0 {
            return Ok(EerResult {
                eer: frr[k],
                threshold: thresholds[k],
                n_genuine: genuine.len(),
                n_fake: fake.len(),
            });
        }
        if d > 0.0 {
            let dp = frr[k - 1] - far[k - 1];
            let alpha = -dp / (d - dp);
            let eer = frr[k - 1] + alpha * (frr[k] - frr[k - 1]);
            let t_hi = if thresholds[k].is_finite() { thresholds[k] } else { thresholds[k - 1] };
            let threshold = thresholds[k - 1] + alpha * (t_hi - thresholds[k - 1]);
            return Ok(EerResult {
                eer,
                threshold,
                n_genuine: genuine.len(),
                n_fake: fake.len(),
            });
        }
    }
    unreachable!("frr - far ends at +1")
}
