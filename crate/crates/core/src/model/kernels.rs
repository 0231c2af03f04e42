//! Dense primitives with a fixed summation order.

use crate::num::Real;

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    let mut acc = [T::zero(); 8];
    let chunks = n / 8;
    for c in 0..chunks {
        let a8 = &a[c * 8..c * 8 + 8];
        let b8 = &b[c * 8..c * 8 + 8];
        for k in 0..8 {
            acc[k] += a8[k] * b8[k];
        }
    }
    let mut s = ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
    for i in chunks * 8..n {
        s += a[i] * b[i];
    }
    s
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Row `r` of the input starts at `r * stride` and spans `w.len() / out`
/// values; convolutions pass overlapping rows this way.
pub(crate) struct Rows<'a, T> {
    pub data: &'a [T],
    pub count: usize,
    pub stride: usize,
}

/// `y[r, o] = b[o] + w[o] . x[r]`
pub(crate) fn linear<T: Real>(x: Rows<'_, T>, w: &[T], b: &[T], y: &mut [T]) {
    let out = b.len();
    let inp = w.len() / out;
    debug_assert_eq!(y.len(), x.count * out);
    for r in 0..x.count {
        let xr = &x.data[r * x.stride..r * x.stride + inp];
        let yr = &mut y[r * out..(r + 1) * out];
        for o in 0..out {
            yr[o] = b[o] + dot(&w[o * inp..(o + 1) * inp], xr);
        }
    }
}

/// Accumulates weight/bias gradients and, if `dx` is given, input gradients
/// (laid out like `x`, overlapping rows summed).
pub(crate) fn linear_backward<T: Real>(
    x: Rows<'_, T>,
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let out = db.len();
    let inp = w.len() / out;
    for r in 0..x.count {
        let xr = &x.data[r * x.stride..r * x.stride + inp];
        let dyr = &dy[r * out..(r + 1) * out];
        for o in 0..out {
            let g = dyr[o];
            if g == T::zero() {
                continue;
            }
            db[o] += g;
            axpy(g, xr, &mut dw[o * inp..(o + 1) * inp]);
            if let Some(dx) = dx.as_deref_mut() {
                axpy(g, &w[o * inp..(o + 1) * inp], &mut dx[r * x.stride..r * x.stride + inp]);
            }
        }
    }
}

/// Per-row layer norm. Stores normalized values and inverse std for backward.
pub(crate) fn layer_norm<T: Real>(
    x: &[T],
    dim: usize,
    gain: &[T],
    bias: &[T],
    eps: T,
    xhat: &mut [T],
    rstd: &mut [T],
    y: &mut [T],
) {
    let inv_n = T::one() / T::of(dim as f64);
    for (r, xr) in x.chunks_exact(dim).enumerate() {
        let mean = xr.iter().copied().sum::<T>() * inv_n;
        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() * inv_n;
        let rs = T::one() / (var + eps).sqrt();
        rstd[r] = rs;
        let xh = &mut xhat[r * dim..(r + 1) * dim];
        let yr = &mut y[r * dim..(r + 1) * dim];
        for i in 0..dim {
            xh[i] = (xr[i] - mean) * rs;
            yr[i] = xh[i] * gain[i] + bias[i];
        }
    }
}

pub(crate) fn layer_norm_backward<T: Real>(
    dy: &[T],
    dim: usize,
    gain: &[T],
    xhat: &[T],
    rstd: &[T],
    dgain: &mut [T],
    dbias: &mut [T],
    dx: &mut [T],
) {
    let inv_n = T::one() / T::of(dim as f64);
    for (r, dyr) in dy.chunks_exact(dim).enumerate() {
        let xh = &xhat[r * dim..(r + 1) * dim];
        let mut sum_g = T::zero();
        let mut sum_gx = T::zero();
        for i in 0..dim {
            let g = dyr[i] * gain[i];
            sum_g += g;
            sum_gx += g * xh[i];
            dgain[i] += dyr[i] * xh[i];
            dbias[i] += dyr[i];
        }
        let mg = sum_g * inv_n;
        let mgx = sum_gx * inv_n;
        let dxr = &mut dx[r * dim..(r + 1) * dim];
        for i in 0..dim {
            let g = dyr[i] * gain[i];
            dxr[i] += rstd[r] * (g - mg - xh[i] * mgx);
        }
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

/// Tanh-approximated GELU.
#[inline]
pub(crate) fn gelu<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + a * x * x * x)).tanh_())
}

#[inline]
pub(crate) fn gelu_grad<T: Real>(x: T) -> T {
    let c = T::of(GELU_C);
    let a = T::of(GELU_A);
    let half = T::of(0.5);
    let t = (c * (x + a * x * x * x)).tanh_();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * a * x * x)
}
