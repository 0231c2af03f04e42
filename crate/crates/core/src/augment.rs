//! RawBoost raw-waveform augmentation.
//!
//! Three noise families act directly on the 16 kHz waveform:
//!
//! * **LnL convolutive noise**: the signal and its integer powers are each
//!   passed through a random bank of band-stop (notch) filters and summed.
//! * **ISD impulsive noise**: a random fraction of samples is perturbed in
//!   proportion to its own value.
//! * **SSI stationary noise**: notch-colored Gaussian noise added at a
//!   random SNR.
//!
//! All draws come from an explicit RNG so `(x, config, seed)` fixes the
//! output. Outputs never exceed unit peak.

use alloc::vec::Vec;

use rand::seq::index;
use rand::{Rng, RngCore, SeedableRng};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::dsp::{convolve, fir_same, firwin_bandstop, max_response};
use crate::rng::StreamRng;
use crate::{Error, Result, SAMPLE_RATE};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawBoostMode {
    Off,
    Lnl,
    Isd,
    Ssi,
    /// LnL followed by ISD; the default training preset.
    #[default]
    SeriesLnlIsd,
    /// LnL and ISD applied independently to the input and summed.
    Parallel,
    /// LnL, then ISD, then SSI.
    FullSeries,
}

impl core::str::FromStr for RawBoostMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "off" => RawBoostMode::Off,
            "lnl" => RawBoostMode::Lnl,
            "isd" => RawBoostMode::Isd,
            "ssi" => RawBoostMode::Ssi,
            "series_lnl_isd" => RawBoostMode::SeriesLnlIsd,
            "parallel" => RawBoostMode::Parallel,
            "full_series" => RawBoostMode::FullSeries,
            _ => return Err(Error::InvalidConfig(alloc::format!("unknown rawboost mode `{s}`"))),
        })
    }
}

/// Random bank of cascaded band-stop filters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NotchBank {
    pub bands: usize,
    pub min_center_hz: f64,
    pub max_center_hz: f64,
    pub min_bandwidth_hz: f64,
    pub max_bandwidth_hz: f64,
    /// Filter length range; even draws are bumped to the next odd length.
    pub min_taps: usize,
    pub max_taps: usize,
    pub min_gain_db: f64,
    pub max_gain_db: f64,
}

impl Default for NotchBank {
    fn default() -> Self {
        NotchBank {
            bands: 5,
            min_center_hz: 20.0,
            max_center_hz: 8000.0,
            min_bandwidth_hz: 100.0,
            max_bandwidth_hz: 1000.0,
            min_taps: 10,
            max_taps: 100,
            min_gain_db: 0.0,
            max_gain_db: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LnlParams {
    #[serde(flatten)]
    pub bank: NotchBank,
    /// Highest power of the input that contributes a filtered term.
    pub order: usize,
    /// Attenuation range (dB) subtracted from the gain of every nonlinear term.
    pub min_nonlinear_bias_db: f64,
    pub max_nonlinear_bias_db: f64,
}

impl Default for LnlParams {
    fn default() -> Self {
        LnlParams {
            bank: NotchBank::default(),
            order: 5,
            min_nonlinear_bias_db: 5.0,
            max_nonlinear_bias_db: 20.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IsdParams {
    pub min_percent: f64,
    pub max_percent: f64,
    pub min_scale: f64,
    pub max_scale: f64,
}

impl Default for IsdParams {
    fn default() -> Self {
        IsdParams {
            min_percent: 0.0,
            max_percent: 10.0,
            min_scale: 2.0,
            max_scale: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SsiParams {
    #[serde(flatten)]
    pub bank: NotchBank,
    pub min_snr_db: f64,
    pub max_snr_db: f64,
}

impl Default for SsiParams {
    fn default() -> Self {
        SsiParams {
            bank: NotchBank::default(),
            min_snr_db: 10.0,
            max_snr_db: 40.0,
        }
    }
}

/// The `[rawboost]` block of a training config. Defaults are the
/// `asvspoof-best` preset: LnL then ISD with the reference parameter ranges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RawBoostConfig {
    pub mode: RawBoostMode,
    /// Probability that a training item is augmented at all.
    pub apply_prob: f64,
    pub lnl: LnlParams,
    pub isd: IsdParams,
    pub ssi: SsiParams,
}

impl Default for RawBoostConfig {
    fn default() -> Self {
        RawBoostConfig {
            mode: RawBoostMode::SeriesLnlIsd,
            apply_prob: 1.0,
            lnl: LnlParams::default(),
            isd: IsdParams::default(),
            ssi: SsiParams::default(),
        }
    }
}

impl RawBoostConfig {
    pub fn asvspoof_best() -> Self {
        Self::default()
    }

    pub fn off() -> Self {
        RawBoostConfig {
            mode: RawBoostMode::Off,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn range(name: &str, lo: f64, hi: f64) -> Result<()> {
            if !(lo <= hi) {
                return Err(Error::InvalidConfig(alloc::format!("{name}: min {lo} > max {hi}")));
            }
            Ok(())
        }
        fn bank(prefix: &str, b: &NotchBank) -> Result<()> {
            range(&alloc::format!("{prefix} center"), b.min_center_hz, b.max_center_hz)?;
            range(&alloc::format!("{prefix} bandwidth"), b.min_bandwidth_hz, b.max_bandwidth_hz)?;
            range(&alloc::format!("{prefix} taps"), b.min_taps as f64, b.max_taps as f64)?;
            range(&alloc::format!("{prefix} gain"), b.min_gain_db, b.max_gain_db)?;
            if b.min_center_hz < 0.0 || b.min_bandwidth_hz < 0.0 {
                return Err(Error::InvalidConfig(alloc::format!("{prefix}: negative frequency")));
            }
            Ok(())
        }
        bank("lnl", &self.lnl.bank)?;
        range("lnl nonlinear bias", self.lnl.min_nonlinear_bias_db, self.lnl.max_nonlinear_bias_db)?;
        if self.lnl.order == 0 {
            return Err(Error::InvalidConfig("lnl order must be at least 1".into()));
        }
        range("isd percent", self.isd.min_percent, self.isd.max_percent)?;
        if self.isd.min_percent < 0.0 || self.isd.max_percent > 100.0 {
            return Err(Error::InvalidConfig("isd percent outside [0, 100]".into()));
        }
        range("isd scale", self.isd.min_scale, self.isd.max_scale)?;
        bank("ssi", &self.ssi.bank)?;
        range("ssi snr", self.ssi.min_snr_db, self.ssi.max_snr_db)?;
        if self.ssi.min_snr_db < -10.0 || self.ssi.max_snr_db > 60.0 {
            return Err(Error::InvalidConfig("ssi snr outside [-10, 60] dB".into()));
        }
        if !(0.0..=1.0).contains(&self.apply_prob) {
            return Err(Error::InvalidConfig("apply_prob outside [0, 1]".into()));
        }
        Ok(())
    }
}

/// One drawn band of a notch bank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrawnNotch {
    pub center_hz: f64,
    pub bandwidth_hz: f64,
    pub taps: usize,
}

/// A drawn filter: cascade coefficients plus the parameters that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct DrawnFilter {
    pub coeffs: Vec<f64>,
    pub notches: Vec<DrawnNotch>,
    pub gain_db: f64,
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.random();
    lo + (hi - lo) * u
}

/// Draws a cascade of `bank.bands` band-stop filters, scaled so the peak
/// response equals the drawn gain.
pub fn draw_notch_filter<R: Rng + ?Sized>(bank: &NotchBank, gain_db: (f64, f64), rng: &mut R) -> DrawnFilter {
    let fs = SAMPLE_RATE as f64;
    let mut coeffs = alloc::vec![1.0];
    let mut notches = Vec::with_capacity(bank.bands);
    for _ in 0..bank.bands {
        let center = uniform(rng, bank.min_center_hz, bank.max_center_hz);
        let bw = uniform(rng, bank.min_bandwidth_hz, bank.max_bandwidth_hz);
        let mut taps = rng.random_range(bank.min_taps..=bank.max_taps);
        if taps % 2 == 0 {
            taps += 1;
        }
        let lo = (center - bw / 2.0).max(1e-3);
        let hi = (center + bw / 2.0).min(fs / 2.0 - 1e-3);
        coeffs = convolve(&firwin_bandstop(taps, lo, hi, fs), &coeffs);
        notches.push(DrawnNotch {
            center_hz: center,
            bandwidth_hz: bw,
            taps,
        });
    }
    let gain = uniform(rng, gain_db.0, gain_db.1);
    let scale = libm::pow(10.0, gain / 20.0) / max_response(&coeffs, 512);
    for c in &mut coeffs {
        *c *= scale;
    }
    DrawnFilter {
        coeffs,
        notches,
        gain_db: gain,
    }
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

fn to_f64(x: &AudioBuffer) -> Vec<f64> {
    x.samples.iter().map(|&s| s as f64).collect()
}

fn rebuild(x: &AudioBuffer, y: &[f64]) -> AudioBuffer {
    AudioBuffer::mono(y.iter().map(|&v| v as f32).collect(), x.sample_rate)
}

/// Rescales in place if the peak exceeds one; returns the applied gain.
fn limit_peak(y: &mut [f64]) -> f64 {
    let p = peak(y);
    if p > 1.0 {
        let g = 1.0 / p;
        y.iter_mut().for_each(|v| *v *= g);
        g
    } else {
        1.0
    }
}

/// LnL convolutive noise plus the filters that were drawn.
pub fn lnl_convolutive_noise_traced<R: Rng + ?Sized>(
    x: &AudioBuffer,
    p: &LnlParams,
    rng: &mut R,
) -> Result<(AudioBuffer, Vec<DrawnFilter>)> {
    x.require_preprocessed()?;
    let xs = to_f64(x);
    let mut y = alloc::vec![0.0; xs.len()];
    let mut filters = Vec::with_capacity(p.order);
    let mut power = xs.clone();
    for term in 0..p.order {
        let gains = if term == 0 {
            (p.bank.min_gain_db, p.bank.max_gain_db)
        } else {
            (
                p.bank.min_gain_db - p.max_nonlinear_bias_db,
                p.bank.max_gain_db - p.min_nonlinear_bias_db,
            )
        };
        if term > 0 {
            for (pw, &v) in power.iter_mut().zip(&xs) {
                *pw *= v;
            }
        }
        let f = draw_notch_filter(&p.bank, gains, rng);
        for (acc, v) in y.iter_mut().zip(fir_same(&power, &f.coeffs)) {
            *acc += v;
        }
        filters.push(f);
    }
    let (px, py) = (peak(&xs), peak(&y));
    if py > 0.0 {
        let g = px / py;
        y.iter_mut().for_each(|v| *v *= g);
    }
    limit_peak(&mut y);
    Ok((rebuild(x, &y), filters))
}

pub fn lnl_convolutive_noise<R: Rng + ?Sized>(x: &AudioBuffer, p: &LnlParams, rng: &mut R) -> Result<AudioBuffer> {
    lnl_convolutive_noise_traced(x, p, rng).map(|(y, _)| y)
}

/// ISD impulsive noise. `floor(N * percent / 100)` distinct positions get
/// `x[i] += scale * x[i] * r` with `r` the product of two uniform(-1, 1) draws.
pub fn impulsive_sd_noise<R: Rng + ?Sized>(x: &AudioBuffer, p: &IsdParams, rng: &mut R) -> Result<AudioBuffer> {
    x.require_preprocessed()?;
    let mut y = to_f64(x);
    let n = y.len();
    let percent = uniform(rng, p.min_percent, p.max_percent);
    let count = libm::floor(n as f64 * percent / 100.0) as usize;
    let scale = uniform(rng, p.min_scale, p.max_scale);
    let positions = index::sample(rng, n, count.min(n));
    for i in positions.iter() {
        let r = (2.0 * rng.random::<f64>() - 1.0) * (2.0 * rng.random::<f64>() - 1.0);
        y[i] += scale * y[i] * r;
    }
    limit_peak(&mut y);
    Ok(rebuild(x, &y))
}

/// SSI output together with the noise that was actually added (after any
/// peak limiting, so `output = input * gain + noise` with `gain` returned).
#[derive(Clone, Debug, PartialEq)]
pub struct SsiTrace {
    pub output: AudioBuffer,
    pub noise: Vec<f64>,
    pub target_snr_db: f64,
    pub input_gain: f64,
}

impl SsiTrace {
    /// SNR of the (gain-adjusted) input against the stored noise realization.
    pub fn realized_snr_db(&self, x: &AudioBuffer) -> f64 {
        let ps: f64 = x.samples.iter().map(|&s| { let v = s as f64 * self.input_gain; v * v }).sum();
        let pn: f64 = self.noise.iter().map(|v| v * v).sum();
        10.0 * libm::log10(ps / pn)
    }
}

pub fn stationary_si_noise_traced<R: Rng + ?Sized>(x: &AudioBuffer, p: &SsiParams, rng: &mut R) -> Result<SsiTrace> {
    x.require_preprocessed()?;
    let xs = to_f64(x);
    let signal_norm = libm::sqrt(xs.iter().map(|v| v * v).sum::<f64>());
    if signal_norm == 0.0 {
        return Err(Error::Silent("stationary noise SNR is undefined"));
    }
    let white: Vec<f64> = (0..xs.len()).map(|_| rng.sample(StandardNormal)).collect();
    let f = draw_notch_filter(&p.bank, (p.bank.min_gain_db, p.bank.max_gain_db), rng);
    let mut noise = fir_same(&white, &f.coeffs);
    let snr = uniform(rng, p.min_snr_db, p.max_snr_db);
    let noise_norm = libm::sqrt(noise.iter().map(|v| v * v).sum::<f64>());
    if noise_norm > 0.0 {
        let g = signal_norm / noise_norm / libm::pow(10.0, 0.05 * snr);
        noise.iter_mut().for_each(|v| *v *= g);
    }
    let mut y: Vec<f64> = xs.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let g = limit_peak(&mut y);
    if g != 1.0 {
        noise.iter_mut().for_each(|v| *v *= g);
    }
    Ok(SsiTrace {
        output: rebuild(x, &y),
        noise,
        target_snr_db: snr,
        input_gain: g,
    })
}

pub fn stationary_si_noise<R: Rng + ?Sized>(x: &AudioBuffer, p: &SsiParams, rng: &mut R) -> Result<AudioBuffer> {
    stationary_si_noise_traced(x, p, rng).map(|t| t.output)
}

/// Independent streams for the three noise families, split off the caller's
/// RNG so a composed mode draws exactly what its parts would draw alone.
pub struct RawBoostStreams {
    pub lnl: StreamRng,
    pub isd: StreamRng,
    pub ssi: StreamRng,
}

impl RawBoostStreams {
    pub fn split<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        RawBoostStreams {
            lnl: StreamRng::seed_from_u64(rng.next_u64()),
            isd: StreamRng::seed_from_u64(rng.next_u64()),
            ssi: StreamRng::seed_from_u64(rng.next_u64()),
        }
    }
}

fn ssi_or_identity(x: AudioBuffer, p: &SsiParams, rng: &mut StreamRng) -> Result<AudioBuffer> {
    match stationary_si_noise(&x, p, rng) {
        Err(Error::Silent(_)) => Ok(x),
        other => other,
    }
}

/// Applies the configured mode. Composed modes run in the listed order.
pub fn rawboost<R: RngCore + ?Sized>(x: &AudioBuffer, cfg: &RawBoostConfig, rng: &mut R) -> Result<AudioBuffer> {
    if cfg.mode == RawBoostMode::Off {
        return Ok(x.clone());
    }
    let mut s = RawBoostStreams::split(rng);
    match cfg.mode {
        RawBoostMode::Off => unreachable!(),
        RawBoostMode::Lnl => lnl_convolutive_noise(x, &cfg.lnl, &mut s.lnl),
        RawBoostMode::Isd => impulsive_sd_noise(x, &cfg.isd, &mut s.isd),
        RawBoostMode::Ssi => ssi_or_identity(x.clone(), &cfg.ssi, &mut s.ssi),
        RawBoostMode::SeriesLnlIsd => {
            let y = lnl_convolutive_noise(x, &cfg.lnl, &mut s.lnl)?;
            impulsive_sd_noise(&y, &cfg.isd, &mut s.isd)
        }
        RawBoostMode::Parallel => {
            let a = lnl_convolutive_noise(x, &cfg.lnl, &mut s.lnl)?;
            let b = impulsive_sd_noise(x, &cfg.isd, &mut s.isd)?;
            let mut y: Vec<f64> = a.samples.iter().zip(&b.samples).map(|(&p, &q)| p as f64 + q as f64).collect();
            limit_peak(&mut y);
            Ok(rebuild(x, &y))
        }
        RawBoostMode::FullSeries => {
            let y = lnl_convolutive_noise(x, &cfg.lnl, &mut s.lnl)?;
            let y = impulsive_sd_noise(&y, &cfg.isd, &mut s.isd)?;
            ssi_or_identity(y, &cfg.ssi, &mut s.ssi)
        }
    }
}

/// Training-time entry point: honours `apply_prob` before dispatching.
pub fn augment_for_training<R: RngCore + ?Sized>(x: &AudioBuffer, cfg: &RawBoostConfig, rng: &mut R) -> Result<AudioBuffer> {
    if cfg.mode == RawBoostMode::Off {
        return Ok(x.clone());
    }
    let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
    if u >= cfg.apply_prob {
        return Ok(x.clone());
    }
    rawboost(x, cfg, rng)
}
