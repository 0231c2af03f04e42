//! PCM WAV reading and writing.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cmtrain_core::audio::AudioBuffer;
use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

/// Decodes a PCM WAV (8/16/24/32-bit integer or 32-bit float) into floats in
/// `[-1, 1]`, keeping the original rate and channel layout. Truncated data
/// chunks are an error, never a partial buffer.
pub fn load_audio(path: &Path) -> Result<AudioBuffer> {
    let reader = WavReader::open(path).with_context(|| format!("cannot read WAV `{}`", path.display()))?;
    decode(reader).with_context(|| format!("cannot decode `{}`", path.display()))
}

fn decode(reader: WavReader<BufReader<File>>) -> Result<AudioBuffer> {
    let spec = reader.spec();
    if spec.channels == 0 || spec.sample_rate == 0 {
        bail!("header declares {} channels at {} Hz", spec.channels, spec.sample_rate);
    }
    let expected = reader.len() as usize;
    let samples: Vec<f32> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader.into_samples::<f32>().collect::<Result<_, _>>()?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| (v as f64 * scale) as f32))
                .collect::<Result<_, _>>()?
        }
        (fmt, bits) => bail!("unsupported sample format {fmt:?} with {bits} bits"),
    };
    if samples.len() != expected {
        bail!("data chunk holds {} of {} declared samples", samples.len(), expected);
    }
    if samples.len() % spec.channels as usize != 0 {
        bail!("sample count {} is not a multiple of {} channels", samples.len(), spec.channels);
    }
    Ok(AudioBuffer {
        samples,
        sample_rate: spec.sample_rate,
        channels: spec.channels,
    })
}

/// Duration in seconds from a full decode, so damaged files are caught at
/// manifest build time rather than mid-training.
pub fn probe_duration(path: &Path) -> Result<f64> {
    let buf = load_audio(path)?;
    if buf.frames() == 0 {
        bail!("`{}` contains no samples", path.display());
    }
    Ok(buf.duration_s())
}

/// Quantizes to signed 16-bit: `round(x * 32768)` clamped to the i16 range.
pub fn to_pcm16(x: f32) -> i16 {
    (x as f64 * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn write_pcm16(path: &Path, buf: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: buf.channels,
        sample_rate: buf.sample_rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut w = WavWriter::create(path, spec).with_context(|| format!("cannot create `{}`", path.display()))?;
    for &s in &buf.samples {
        w.write_sample(to_pcm16(s))?;
    }
    w.finalize().with_context(|| format!("cannot finish `{}`", path.display()))?;
    Ok(())
}

/// Writes 32-bit float samples; used for augmentation previews.
pub fn write_f32(path: &Path, buf: &AudioBuffer) -> Result<()> {
    let spec = WavSpec {
        channels: buf.channels,
        sample_rate: buf.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut w = WavWriter::create(path, spec).with_context(|| format!("cannot create `{}`", path.display()))?;
    for &s in &buf.samples {
        w.write_sample(s)?;
    }
    w.finalize()?;
    Ok(())
}
