//! Small filter-design and filtering helpers shared by the resampler and
//! RawBoost.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > sum * 1e-17 {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Kaiser window evaluated at `x` in `[-1, 1]`; zero outside.
pub(crate) fn kaiser(x: f64, beta: f64, i0_beta: f64) -> f64 {
    if x.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * libm::sqrt(1.0 - x * x)) / i0_beta
}

/// Normalized sinc, `sin(pi x) / (pi x)`.
pub(crate) fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        libm::sin(px) / px
    }
}

/// Hamming-windowed band-stop FIR with `taps` (odd) coefficients rejecting
/// `[low_hz, high_hz]`, scaled to unit gain at DC.
pub fn firwin_bandstop(taps: usize, low_hz: f64, high_hz: f64, fs: f64) -> Vec<f64> {
    debug_assert!(taps % 2 == 1);
    let nyq = fs / 2.0;
    let lo = low_hz / nyq;
    let hi = high_hz / nyq;
    let mid = (taps - 1) as f64 / 2.0;
    let denom = (taps - 1).max(1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let m = n as f64 - mid;
            // Pass bands [0, lo] and [hi, 1].
            let ideal = lo * sinc(lo * m) + sinc(m) - hi * sinc(hi * m);
            let w = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / denom)
            };
            ideal * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Hamming-windowed low-pass FIR with `taps` (odd) coefficients and unit DC gain.
pub fn firwin_lowpass(taps: usize, cutoff_hz: f64, fs: f64) -> Vec<f64> {
    debug_assert!(taps % 2 == 1);
    let fc = cutoff_hz / (fs / 2.0);
    let mid = (taps - 1) as f64 / 2.0;
    let denom = (taps - 1).max(1) as f64;
    let mut h: Vec<f64> = (0..taps)
        .map(|n| {
            let w = if taps == 1 {
                1.0
            } else {
                0.54 - 0.46 * libm::cos(2.0 * PI * n as f64 / denom)
            };
            fc * sinc(fc * (n as f64 - mid)) * w
        })
        .collect();
    let dc: f64 = h.iter().sum();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Full linear convolution.
pub fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Peak magnitude of the frequency response over `points` bins in `[0, pi)`.
pub fn max_response(b: &[f64], points: usize) -> f64 {
    let mut peak = 0.0f64;
    for k in 0..points {
        let w = PI * k as f64 / points as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &c) in b.iter().enumerate() {
            let (s, co) = libm::sincos(w * n as f64);
            re += c * co;
            im -= c * s;
        }
        peak = peak.max(libm::sqrt(re * re + im * im));
    }
    peak
}

/// Applies an odd-length linear-phase FIR with its group delay removed, so
/// `out[n]` is aligned with `x[n]`. Samples outside `x` are zero.
pub fn fir_same(x: &[f64], b: &[f64]) -> Vec<f64> {
    if b.len() >= FFT_MIN_TAPS && x.len() >= b.len() {
        fir_same_fft(x, b)
    } else {
        fir_same_direct(x, b)
    }
}

/// Filters shorter than this are applied directly.
const FFT_MIN_TAPS: usize = 64;

fn fir_same_direct(x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    let taps = b.len();
    let delay = (taps - 1) / 2;
    // out[n] = sum_k b[k] x[n + delay - k] = sum_j rb[j] x[n - delay + j]
    let rb: Vec<f64> = b.iter().rev().copied().collect();
    let mut padded = vec![0.0; n + taps - 1];
    padded[delay..delay + n].copy_from_slice(x);
    (0..n)
        .map(|i| dot(&rb, &padded[i..i + taps]))
        .collect()
}

/// Overlap-add convolution; same output as [`fir_same_direct`] up to
/// rounding.
fn fir_same_fft(x: &[f64], b: &[f64]) -> Vec<f64> {
    let n = x.len();
    let taps = b.len();
    let delay = (taps - 1) / 2;
    let size = (4 * taps).next_power_of_two().max(1024);
    let block = size - taps + 1;
    let tw = twiddles(size);

    let mut h = vec![(0.0, 0.0); size];
    for (d, &v) in h.iter_mut().zip(b) {
        d.0 = v;
    }
    fft_in_place(&mut h, &tw, false);

    let mut full = vec![0.0; n + taps - 1];
    let mut buf = vec![(0.0, 0.0); size];
    for start in (0..n).step_by(block) {
        let chunk = &x[start..(start + block).min(n)];
        buf.iter_mut().for_each(|v| *v = (0.0, 0.0));
        for (d, &v) in buf.iter_mut().zip(chunk) {
            d.0 = v;
        }
        fft_in_place(&mut buf, &tw, false);
        for (v, &(hr, hi)) in buf.iter_mut().zip(&h) {
            *v = (v.0 * hr - v.1 * hi, v.0 * hi + v.1 * hr);
        }
        fft_in_place(&mut buf, &tw, true);
        let len = (chunk.len() + taps - 1).min(full.len() - start);
        let scale = 1.0 / size as f64;
        for (o, v) in full[start..start + len].iter_mut().zip(&buf) {
            *o += v.0 * scale;
        }
    }
    full.truncate(delay + n);
    full.drain(..delay);
    full
}

/// `e^{-2 pi i k / size}` for `k < size / 2`.
fn twiddles(size: usize) -> Vec<(f64, f64)> {
    (0..size / 2)
        .map(|k| {
            let (s, c) = libm::sincos(-2.0 * PI * k as f64 / size as f64);
            (c, s)
        })
        .collect()
}

/// Iterative radix-2 FFT (unnormalized). `data.len()` must be a power of two
/// equal to twice `tw.len()`.
pub(crate) fn fft_in_place(data: &mut [(f64, f64)], tw: &[(f64, f64)], inverse: bool) {
    let n = data.len();
    debug_assert!(n.is_power_of_two() && tw.len() * 2 == n);
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            data.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let (wr, wi) = tw[k * stride];
                let wi = if inverse { -wi } else { wi };
                let (ar, ai) = data[start + k];
                let (br, bi) = data[start + k + half];
                let (tr, ti) = (br * wr - bi * wi, br * wi + bi * wr);
                data[start + k] = (ar + tr, ai + ti);
                data[start + k + half] = (ar - tr, ai - ti);
            }
        }
        len *= 2;
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = c * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in chunks * 4..a.len() {
        s += a[i] * b[i];
    }
    s
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn i0_reference_values() {
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_2).abs() < 1e-14);
        assert!((bessel_i0(8.6) - 750.461_159_563_165_9).abs() / 750.0 < 1e-9);
    }

    #[test]
    fn bandstop_has_unit_dc_and_rejects_band() {
        let h = firwin_bandstop(101, 2000.0, 3000.0, 16000.0);
        assert!((h.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let at = |f: f64| {
            let w = 2.0 * PI * f / 16000.0;
            let (mut re, mut im) = (0.0, 0.0);
            for (n, c) in h.iter().enumerate() {
                re += c * libm::cos(w * n as f64);
                im -= c * libm::sin(w * n as f64);
            }
            libm::sqrt(re * re + im * im)
        };
        assert!(at(2500.0) < 0.05);
        assert!((at(500.0) - 1.0).abs() < 0.02);
        assert!((at(6000.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn lowpass_passes_below_and_rejects_above_cutoff() {
        let h = firwin_lowpass(129, 4000.0, 16000.0);
        let at = |f: f64| {
            let w = 2.0 * PI * f / 16000.0;
            let (mut re, mut im) = (0.0, 0.0);
            for (n, c) in h.iter().enumerate() {
                re += c * libm::cos(w * n as f64);
                im -= c * libm::sin(w * n as f64);
            }
            libm::sqrt(re * re + im * im)
        };
        assert!((at(1000.0) - 1.0).abs() < 0.01);
        assert!(at(5500.0) < 0.01);
    }

    #[test]
    fn identity_filter_is_identity() {
        let x = [0.1, -0.4, 0.3, 0.9];
        assert_eq!(fir_same(&x, &[1.0]), x.to_vec());
    }

    #[test]
    fn fft_path_matches_direct_convolution() {
        let x: Vec<f64> = (0..5000).map(|i| libm::sin(i as f64 * 0.37) + 0.3 * libm::cos(i as f64 * 2.1)).collect();
        for taps in [64, 129, 301, 497] {
            let b = firwin_bandstop(taps | 1, 1500.0, 2600.0, 16000.0);
            let fast = fir_same_fft(&x, &b);
            let slow = fir_same_direct(&x, &b);
            assert_eq!(fast.len(), slow.len());
            for (a, c) in fast.iter().zip(&slow) {
                assert!((a - c).abs() < 1e-12, "{a} vs {c}");
            }
        }
    }

    #[test]
    fn fir_same_compensates_delay() {
        // Symmetric 3-tap smoother applied to an impulse stays centred.
        let y = fir_same(&[0.0, 0.0, 1.0, 0.0, 0.0], &[0.25, 0.5, 0.25]);
        assert_eq!(y, vec![0.0, 0.25, 0.5, 0.25, 0.0]);
    }
}
