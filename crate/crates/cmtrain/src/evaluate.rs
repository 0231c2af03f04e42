//! Whole-file and segment-level scoring, multi-duration EER tables and
//! embedding export.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use cmtrain_core::audio::segment_bounds;
use cmtrain_core::batcher::PaddedBatch;
use cmtrain_core::catalog::{Manifest, ManifestEntry};
use cmtrain_core::eval::{compute_eer, EerResult, ScoreRecord, LABEL_FAKE, LABEL_GENUINE};
use cmtrain_core::model::{score, Model};
use cmtrain_core::SAMPLE_RATE;
use rayon::prelude::*;

use crate::manifest::load_entry;

pub const DEFAULT_DURATIONS: [f64; 5] = [4.0, 10.0, 13.0, 30.0, 50.0];
pub const DEFAULT_MIN_TAIL_S: f64 = 1.0;

pub const SCORE_HEADER: &str = "# score = posterior of the genuine class (higher = more genuine); label 1 = genuine, 0 = fake";
pub const SCORE_COLUMNS: &str = "file_id\tsegment_index\tscore\tlabel";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreOptions {
    /// Whole-file scoring when `None`.
    pub segment_seconds: Option<f64>,
    pub min_tail_s: f64,
    /// Fail on the first unreadable file instead of counting it.
    pub strict: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            segment_seconds: None,
            min_tail_s: DEFAULT_MIN_TAIL_S,
            strict: false,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScoreReport {
    pub records: Vec<ScoreRecord>,
    /// Entries that could not be scored, with the reason.
    pub missing: Vec<(String, String)>,
}

pub fn label_of(e: &ManifestEntry) -> u8 {
    if e.category.is_genuine() {
        LABEL_GENUINE
    } else {
        LABEL_FAKE
    }
}

/// Genuine posterior of one unpadded waveform.
pub fn score_samples(model: &Model, params: &[f32], samples: &[f32]) -> Result<f64> {
    let batch = PaddedBatch::from_rows(&[samples.to_vec()], vec![0], vec![String::new()])?;
    Ok(score(&model.logits(params, &batch)?)[0] as f64)
}

fn score_entry(model: &Model, params: &[f32], base: &Path, e: &ManifestEntry, opts: &ScoreOptions) -> Result<Vec<ScoreRecord>> {
    let buf = load_entry(base, e)?;
    let label = label_of(e);
    match opts.segment_seconds {
        None => Ok(vec![ScoreRecord {
            file_id: e.id.clone(),
            segment_index: -1,
            score: score_samples(model, params, &buf.samples)?,
            label,
        }]),
        Some(seg) => segment_bounds(buf.samples.len(), SAMPLE_RATE, seg, opts.min_tail_s)?
            .into_iter()
            .enumerate()
            .map(|(i, (a, b))| {
                Ok(ScoreRecord {
                    file_id: e.id.clone(),
                    segment_index: i as i64,
                    score: score_samples(model, params, &buf.samples[a..b])
                        .with_context(|| format!("segment {i} of `{}`", e.id))?,
                    label,
                })
            })
            .collect(),
    }
}

/// Scores every entry in parallel; output order follows the manifest. No
/// augmentation or trimming is applied.
pub fn score_manifest(model: &Model, params: &[f32], m: &Manifest, base: &Path, opts: &ScoreOptions) -> Result<ScoreReport> {
    let results: Vec<Result<Vec<ScoreRecord>>> =
        m.entries().par_iter().map(|e| score_entry(model, params, base, e, opts)).collect();
    let mut report = ScoreReport::default();
    for (e, r) in m.entries().iter().zip(results) {
        match r {
            Ok(recs) => report.records.extend(recs),
            Err(err) if !opts.strict => {
                log::warn!("could not score `{}`: {err:#}", e.id);
                report.missing.push((e.id.clone(), format!("{err:#}")));
            }
            Err(err) => return Err(err.context(format!("scoring `{}`", e.id))),
        }
    }
    Ok(report)
}

pub fn scores_to_string(records: &[ScoreRecord]) -> Result<String> {
    let mut out = format!("{SCORE_HEADER}\n{SCORE_COLUMNS}\n");
    for r in records {
        ensure!(!r.file_id.contains(['\t', '\n', '\r']), "file id `{}` contains a tab or newline", r.file_id);
        writeln!(out, "{}\t{}\t{}\t{}", r.file_id, r.segment_index, r.score, r.label).unwrap();
    }
    Ok(out)
}

pub fn write_scores(path: &Path, records: &[ScoreRecord]) -> Result<()> {
    fs::write(path, scores_to_string(records)?).with_context(|| format!("cannot write `{}`", path.display()))
}

pub fn read_scores(path: &Path) -> Result<Vec<ScoreRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read `{}`", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.starts_with('#') || line.is_empty() || line == SCORE_COLUMNS {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            bail!("{}:{}: expected 4 tab-separated fields", path.display(), i + 1);
        }
        let bad = || format!("{}:{}: malformed record", path.display(), i + 1);
        out.push(ScoreRecord {
            file_id: f[0].to_string(),
            segment_index: f[1].parse().with_context(bad)?,
            score: f[2].parse().with_context(bad)?,
            label: f[3].parse().with_context(bad)?,
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct DurationRow {
    pub seconds: f64,
    pub segments: usize,
    pub eer: EerResult,
    pub report: ScoreReport,
}

/// Segment-level EER for each requested segment duration.
pub fn multi_duration_eval(
    model: &Model,
    params: &[f32],
    m: &Manifest,
    base: &Path,
    durations: &[f64],
    min_tail_s: f64,
    strict: bool,
) -> Result<Vec<DurationRow>> {
    ensure!(!durations.is_empty(), "no segment durations requested");
    durations
        .iter()
        .map(|&d| {
            let opts = ScoreOptions {
                segment_seconds: Some(d),
                min_tail_s,
                strict,
            };
            let report = score_manifest(model, params, m, base, &opts)?;
            let eer = compute_eer(&report.records).with_context(|| format!("EER at {d} s"))?;
            Ok(DurationRow {
                seconds: d,
                segments: report.records.len(),
                eer,
                report,
            })
        })
        .collect()
}

/// Writes one CSV row of pooled embeddings per entry:
/// `file_id,label,e_0,...,e_{D-1}`. Returns the row count.
pub fn export_embeddings(model: &Model, params: &[f32], m: &Manifest, base: &Path, out: &Path) -> Result<usize> {
    let rows: Vec<Result<Vec<f32>>> = m
        .entries()
        .par_iter()
        .map(|e| {
            let buf = load_entry(base, e)?;
            let batch = PaddedBatch::from_rows(&[buf.samples], vec![0], vec![e.id.clone()])?;
            Ok(model.embed(params, &batch)?.0)
        })
        .collect();
    let mut w = csv::Writer::from_path(out).with_context(|| format!("cannot create `{}`", out.display()))?;
    let dim = model.config().dim;
    let mut header = vec!["file_id".to_string(), "label".to_string()];
    header.extend((0..dim).map(|i| format!("e_{i}")));
    w.write_record(&header)?;
    for (e, r) in m.entries().iter().zip(rows) {
        let emb = r.with_context(|| format!("embedding `{}`", e.id))?;
        let mut rec = vec![e.id.clone(), label_of(e).to_string()];
        rec.extend(emb.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(m.len())
}
