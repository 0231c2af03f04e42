//! Waveform buffers and the preprocessing chain: downmix, resample to
//! 16 kHz, peak-normalize, and fixed-length segmentation for scoring.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dsp::{bessel_i0, gcd, kaiser, sinc};
use crate::{Error, Result, SAMPLE_RATE};

/// Interleaved float samples in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl AudioBuffer {
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        AudioBuffer {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    pub fn frames(&self) -> usize {
        self.samples.len() / self.channels.max(1) as usize
    }

    pub fn duration_s(&self) -> f64 {
        self.frames() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    /// Errors unless the buffer is 16 kHz mono.
    pub fn require_preprocessed(&self) -> Result<()> {
        if self.sample_rate != SAMPLE_RATE || self.channels != 1 {
            return Err(Error::NotPreprocessed {
                expected: SAMPLE_RATE,
                rate: self.sample_rate,
                channels: self.channels,
            });
        }
        Ok(())
    }
}

/// Averages all channels of each frame.
pub fn downmix(buf: &AudioBuffer) -> AudioBuffer {
    let ch = buf.channels.max(1) as usize;
    if ch == 1 {
        return buf.clone();
    }
    let samples = buf
        .samples
        .chunks_exact(ch)
        .map(|frame| {
            let first = frame[0];
            if frame.iter().all(|&s| s == first) {
                first
            } else {
                (frame.iter().map(|&s| s as f64).sum::<f64>() / ch as f64) as f32
            }
        })
        .collect();
    AudioBuffer::mono(samples, buf.sample_rate)
}

/// Kaiser-windowed sinc resampler settings.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ResamplerConfig {
    pub beta: f64,
    pub zero_crossings: usize,
    /// Cutoff as a fraction of the lower of the two Nyquist rates.
    pub rolloff: f64,
}

impl Default for ResamplerConfig {
    fn default() -> Self {
        ResamplerConfig {
            beta: 8.6,
            zero_crossings: 64,
            rolloff: 0.945,
        }
    }
}

// Above this many phases the kernel is evaluated on the fly instead of tabled.
const MAX_TABLED_PHASES: u64 = 2048;

/// Resamples a mono buffer to `target_rate` with the default resampler.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    resample_with(buf, target_rate, &ResamplerConfig::default())
}

/// Rational polyphase resampling. Output sample `n` sits at input time
/// `n * source / target`; the kernel is zero-phase so no delay is introduced.
pub fn resample_with(buf: &AudioBuffer, target_rate: u32, cfg: &ResamplerConfig) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target rate must be positive".into()));
    }
    if buf.channels != 1 {
        return Err(Error::InvalidArgument("resample expects mono input".into()));
    }
    let src = buf.sample_rate as u64;
    if src == 0 {
        return Err(Error::InvalidArgument("source rate must be positive".into()));
    }
    if src == target_rate as u64 {
        return Ok(buf.clone());
    }
    let g = gcd(src, target_rate as u64);
    let up = target_rate as u64 / g;
    let down = src / g;
    let n_in = buf.samples.len() as u64;
    let n_out = ((n_in * up + down / 2) / down) as usize;

    // Cutoff relative to the input Nyquist rate.
    let fc = (up as f64 / down as f64).min(1.0) * cfg.rolloff;
    let half_width = cfg.zero_crossings as f64 / fc;
    let reach = libm::ceil(half_width) as i64;
    let i0_beta = bessel_i0(cfg.beta);
    let kernel = |t: f64| fc * sinc(fc * t) * kaiser(t / half_width, cfg.beta, i0_beta);

    // For phase p the fractional offset is p / up; taps cover offsets
    // -reach..=reach around the integer base index.
    let taps = (2 * reach + 1) as usize;
    let table: Option<Vec<f64>> = (up <= MAX_TABLED_PHASES).then(|| {
        let mut t = vec![0.0; up as usize * taps];
        for p in 0..up as usize {
            let frac = p as f64 / up as f64;
            for (j, k) in (-reach..=reach).enumerate() {
                t[p * taps + j] = kernel(frac - k as f64);
            }
        }
        t
    });

    let x = &buf.samples;
    let mut out = Vec::with_capacity(n_out);
    for n in 0..n_out as u64 {
        let pos = n * down;
        let base = (pos / up) as i64;
        let phase = (pos % up) as usize;
        let frac = phase as f64 / up as f64;
        let mut acc = 0.0f64;
        for (j, k) in (-reach..=reach).enumerate() {
            let idx = base + k;
            if idx < 0 || idx >= n_in as i64 {
                continue;
            }
            let w = match &table {
                Some(t) => t[phase * taps + j],
                None => kernel(frac - k as f64),
            };
            acc += w * x[idx as usize] as f64;
        }
        out.push(acc as f32);
    }
    Ok(AudioBuffer::mono(out, target_rate))
}

/// Loudness normalization policy applied during preprocessing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    #[default]
    Peak,
    None,
}

pub const PEAK_TARGET: f32 = 0.95;

/// Scales the buffer so its peak magnitude is [`PEAK_TARGET`]. A silent
/// buffer is returned unchanged with a warning.
pub fn normalize(buf: &AudioBuffer) -> AudioBuffer {
    let peak = buf.peak();
    if peak == 0.0 {
        log::warn!("normalize: all-zero buffer left unchanged");
        return buf.clone();
    }
    let gain = PEAK_TARGET as f64 / peak as f64;
    AudioBuffer {
        samples: buf.samples.iter().map(|&s| (s as f64 * gain) as f32).collect(),
        ..*buf
    }
}

/// Full preprocessing chain: mono, 16 kHz, then normalization.
pub fn preprocess(buf: &AudioBuffer, norm: NormMode) -> Result<AudioBuffer> {
    let mono = downmix(buf);
    let resampled = resample(&mono, SAMPLE_RATE)?;
    Ok(match norm {
        NormMode::Peak => normalize(&resampled),
        NormMode::None => resampled,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Segment {
    pub parent_id: String,
    pub index: usize,
    pub samples: Vec<f32>,
    pub start_s: f64,
    pub end_s: f64,
}

/// Sample ranges produced by [`segment`]: `floor(T / seg)` full windows from
/// t = 0, plus the remainder if it lasts at least `min_tail_s`.
pub fn segment_bounds(n_samples: usize, sample_rate: u32, seg_seconds: f64, min_tail_s: f64) -> Result<Vec<(usize, usize)>> {
    if !(seg_seconds > 0.0) {
        return Err(Error::InvalidArgument("segment length must be positive".into()));
    }
    let seg = libm::round(seg_seconds * sample_rate as f64) as usize;
    if seg == 0 {
        return Err(Error::InvalidArgument("segment shorter than one sample".into()));
    }
    let full = n_samples / seg;
    let mut out: Vec<(usize, usize)> = (0..full).map(|i| (i * seg, (i + 1) * seg)).collect();
    let tail = n_samples - full * seg;
    if tail > 0 && tail as f64 / sample_rate as f64 >= min_tail_s {
        out.push((full * seg, n_samples));
    }
    Ok(out)
}

pub fn segment(buf: &AudioBuffer, parent_id: &str, seg_seconds: f64, min_tail_s: f64) -> Result<Vec<Segment>> {
    let sr = buf.sample_rate as f64;
    let bounds = segment_bounds(buf.frames(), buf.sample_rate, seg_seconds, min_tail_s)?;
    Ok(bounds
        .into_iter()
        .enumerate()
        .map(|(index, (a, b))| Segment {
            parent_id: parent_id.into(),
            index,
            samples: buf.samples[a..b].to_vec(),
            start_s: a as f64 / sr,
            end_s: b as f64 / sr,
        })
        .collect())
}
