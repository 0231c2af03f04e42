//! Synthetic corpus for end-to-end checks.
//!
//! "Genuine" clips are voiced harmonic tone complexes with a formant-like
//! spectral envelope, syllabic amplitude modulation and a filtered-noise
//! excitation component. Each artifact category applies one artifact family
//! to such a clip: a band-stop notch (`vocoded`), a low-pass (`restored`) or
//! coarse amplitude quantization (`neural_codec`). A target domain is the
//! same generator with different artifact parameters.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cmtrain_core::audio::AudioBuffer;
use cmtrain_core::catalog::{ArtifactCategory, Manifest, ManifestEntry, Split};
use cmtrain_core::dsp::{fir_same, firwin_bandstop, firwin_lowpass};
use cmtrain_core::rng::substream;
use cmtrain_core::SAMPLE_RATE;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::manifest::write_manifest;
use crate::wav;

const PEAK: f64 = 0.9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactParams {
    /// Band removed from `vocoded` clips, in Hz.
    pub notch_hz: (f64, f64),
    /// Cutoff applied to `restored` clips, in Hz.
    pub lowpass_hz: f64,
    /// Bit depth of `neural_codec` clips.
    pub quant_bits: u32,
    /// Range of the genuine fundamental, in Hz.
    pub f0_hz: (f64, f64),
}

impl ArtifactParams {
    pub fn source() -> Self {
        ArtifactParams {
            notch_hz: (2000.0, 3500.0),
            lowpass_hz: 4000.0,
            quant_bits: 4,
            f0_hz: (90.0, 220.0),
        }
    }

    /// Milder artifacts at different frequencies and a higher-pitched speaker
    /// population.
    pub fn target() -> Self {
        ArtifactParams {
            notch_hz: (5200.0, 6000.0),
            lowpass_hz: 6800.0,
            quant_bits: 7,
            f0_hz: (160.0, 300.0),
        }
    }
}

/// One group of clips sharing a split and a duration range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToySplit {
    pub split: Split,
    pub count: usize,
    pub min_s: f64,
    pub max_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyCorpusSpec {
    pub seed: u64,
    pub dataset: String,
    pub artifacts: ArtifactParams,
    /// Categories assigned round-robin to clips.
    pub categories: Vec<ArtifactCategory>,
    pub splits: Vec<ToySplit>,
}

impl ToyCorpusSpec {
    /// 500 clips: 360 train, 40 val (1.5 to 4 s) and 100 test (6 to 16 s).
    pub fn source(seed: u64) -> Self {
        ToyCorpusSpec {
            seed,
            dataset: "toy-source".into(),
            artifacts: ArtifactParams::source(),
            categories: vec![
                ArtifactCategory::Genuine,
                ArtifactCategory::Vocoded,
                ArtifactCategory::Restored,
                ArtifactCategory::NeuralCodec,
            ],
            splits: vec![
                ToySplit { split: Split::Train, count: 360, min_s: 1.5, max_s: 4.0 },
                ToySplit { split: Split::Val, count: 40, min_s: 1.5, max_s: 4.0 },
                ToySplit { split: Split::Test, count: 100, min_s: 6.0, max_s: 16.0 },
            ],
        }
    }

    /// Shifted domain: 160 train clips for fine-tuning and 80 test clips.
    pub fn target(seed: u64) -> Self {
        ToyCorpusSpec {
            dataset: "toy-target".into(),
            artifacts: ArtifactParams::target(),
            splits: vec![
                ToySplit { split: Split::Train, count: 160, min_s: 1.5, max_s: 4.0 },
                ToySplit { split: Split::Test, count: 80, min_s: 4.0, max_s: 8.0 },
            ],
            ..Self::source(seed)
        }
    }
}

/// A genuine clip of `n` samples at 16 kHz.
pub fn genuine_clip<R: Rng + ?Sized>(n: usize, p: &ArtifactParams, rng: &mut R) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let f0 = rng.random_range(p.f0_hz.0..p.f0_hz.1);
    let vib_rate = rng.random_range(3.0..7.0);
    let vib_depth = rng.random_range(0.005..0.03);
    let vib_phase = rng.random_range(0.0..2.0 * PI);
    let syl_rate = rng.random_range(2.0..5.0);
    let syl_phase = rng.random_range(0.0..2.0 * PI);
    let formants = [
        (rng.random_range(300.0..900.0), 120.0),
        (rng.random_range(900.0..2500.0), 200.0),
        (rng.random_range(2500.0..3800.0), 300.0),
    ];
    let envelope = |f: f64| {
        let bumps: f64 = formants
            .iter()
            .map(|&(c, w): &(f64, f64)| (-(f - c) * (f - c) / (2.0 * w * w)).exp())
            .sum();
        0.35 + bumps
    };
    let n_harm = ((7800.0 / (f0 * (1.0 + vib_depth))) as usize).max(1);
    // a·sin(kφ + ph) = (a·cos ph)·sin kφ + (a·sin ph)·cos kφ
    let harm: Vec<(f64, f64)> = (1..=n_harm)
        .map(|k| {
            let a = envelope(k as f64 * f0) / (k as f64).powf(0.25);
            let ph: f64 = rng.random_range(0.0..2.0 * PI);
            (a * ph.cos(), a * ph.sin())
        })
        .collect();

    // Integrated instantaneous frequency of the fundamental; harmonics by
    // repeated complex multiplication of e^{iφ}.
    let mut phase = 0.0f64;
    let mut voiced = vec![0.0f64; n];
    for (i, v) in voiced.iter_mut().enumerate() {
        let t = i as f64 / sr;
        let f = f0 * (1.0 + vib_depth * (2.0 * PI * vib_rate * t + vib_phase).sin());
        phase = (phase + 2.0 * PI * f / sr) % (2.0 * PI);
        let (s1, c1) = phase.sin_cos();
        let (mut s, mut c) = (s1, c1);
        let mut acc = 0.0;
        for &(ac, as_) in &harm {
            acc += ac * s + as_ * c;
            (s, c) = (s * c1 + c * s1, c * c1 - s * s1);
        }
        *v = acc;
    }

    // Breath-like excitation: white noise through a first-order high shelf.
    let noise_gain = rng.random_range(0.15..0.3);
    let mut prev = 0.0;
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = rng.random_range(-1.0..1.0);
            let y = w - 0.6 * prev;
            prev = w;
            y
        })
        .collect();

    let vpeak = voiced.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let out: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let syl = 0.55 + 0.45 * (2.0 * PI * syl_rate * t + syl_phase).sin();
            syl * (voiced[i] / vpeak + noise_gain * noise[i])
        })
        .collect();
    peak_normalize(out)
}

fn peak_normalize(mut x: Vec<f64>) -> Vec<f64> {
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    x
}

/// Applies the artifact family of `category` to a genuine clip.
pub fn apply_artifact(x: &[f64], category: ArtifactCategory, p: &ArtifactParams) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    match category {
        ArtifactCategory::Genuine => x.to_vec(),
        ArtifactCategory::Vocoded => peak_normalize(fir_same(x, &firwin_bandstop(129, p.notch_hz.0, p.notch_hz.1, sr))),
        ArtifactCategory::Restored => peak_normalize(fir_same(x, &firwin_lowpass(129, p.lowpass_hz, sr))),
        ArtifactCategory::NeuralCodec => {
            let levels = ((1u64 << (p.quant_bits - 1)) - 1) as f64;
            x.iter().map(|&v| (v / PEAK * levels).round() / levels * PEAK).collect()
        }
        // Not part of the toy taxonomy: a mild combination of the other artifacts.
        ArtifactCategory::TtsVc => {
            let y = fir_same(x, &firwin_lowpass(129, p.lowpass_hz, sr));
            peak_normalize(fir_same(&y, &firwin_bandstop(129, p.notch_hz.0, p.notch_hz.1, sr)))
        }
    }
}

pub fn toy_clip(category: ArtifactCategory, seconds: f64, p: &ArtifactParams, seed: u64, index: u64) -> AudioBuffer {
    let mut rng = substream(seed, "toy-clip", &[index]);
    let n = (seconds * SAMPLE_RATE as f64).round() as usize;
    let g = genuine_clip(n, p, &mut rng);
    let y = apply_artifact(&g, category, p);
    AudioBuffer::mono(y.iter().map(|&v| v as f32).collect(), SAMPLE_RATE)
}

/// Writes `<dir>/<split>/<category>/clip_NNNNN.wav` plus `<dir>/manifest.jsonl`
/// and a `rules.toml` that rebuilds the same manifest with `manifest build`.
pub fn write_toy_corpus(dir: &Path, spec: &ToyCorpusSpec) -> Result<Manifest> {
    let mut jobs = Vec::new();
    let mut index = 0u64;
    for s in &spec.splits {
        let mut rng = substream(spec.seed, "toy-durations", &[s.split as u64]);
        for i in 0..s.count {
            let cat = spec.categories[i % spec.categories.len()];
            let secs = rng.random_range(s.min_s..=s.max_s);
            let secs = (secs * 100.0).round() / 100.0;
            jobs.push((s.split, cat, secs, index));
            index += 1;
        }
    }
    use rayon::prelude::*;
    let entries: Vec<Result<ManifestEntry>> = jobs
        .par_iter()
        .map(|&(split, cat, secs, idx)| {
            let split_name = split_name(split);
            let rel = format!("{split_name}/{}/clip_{idx:05}.wav", cat.as_str());
            let path = dir.join(&rel);
            fs::create_dir_all(path.parent().unwrap())?;
            let buf = toy_clip(cat, secs, &spec.artifacts, spec.seed, idx);
            wav::write_pcm16(&path, &buf)?;
            Ok(ManifestEntry {
                id: rel.clone(),
                path: rel,
                duration_s: buf.duration_s(),
                category: cat,
                dataset: spec.dataset.clone(),
                language: "synthetic".into(),
                split,
            })
        })
        .collect();
    let m = Manifest::new(entries.into_iter().collect::<Result<_>>()?)?;
    write_manifest(&dir.join("manifest.jsonl"), &m)?;

    let mut rules = String::new();
    for s in &spec.splits {
        for c in &spec.categories {
            rules.push_str(&format!(
                "[[rule]]\nglob = \"{}/{}/*.wav\"\ncategory = \"{}\"\ndataset = \"{}\"\nlanguage = \"synthetic\"\nsplit = \"{}\"\n\n",
                split_name(s.split),
                c.as_str(),
                c.as_str(),
                spec.dataset,
                split_name(s.split)
            ));
        }
    }
    fs::write(dir.join("rules.toml"), rules).context("cannot write rules.toml")?;
    Ok(m)
}

fn split_name(s: Split) -> &'static str {
    match s {
        Split::Train => "train",
        Split::Val => "val",
        Split::Test => "test",
    }
}
