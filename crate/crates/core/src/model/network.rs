//! Row-level forward and backward passes.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels::{axpy, dot, gelu, gelu_grad, layer_norm, layer_norm_backward, linear, linear_backward, Rows};
use super::{Index, LinearIdx, ModelConfig, NormIdx};
use crate::num::Real;

pub(crate) struct BlockCache<T> {
    xhat1: Vec<T>,
    rstd1: Vec<T>,
    u: Vec<T>,
    q: Vec<T>,
    k: Vec<T>,
    v: Vec<T>,
    /// `heads x frames x frames`; zero on invalid keys.
    probs: Vec<T>,
    ctx: Vec<T>,
    xhat2: Vec<T>,
    rstd2: Vec<T>,
    w: Vec<T>,
    f_pre: Vec<T>,
    f_act: Vec<T>,
}

/// Everything one row's forward pass produced.
pub struct RowCache<T> {
    pub n_valid: usize,
    pub frames: usize,
    pub valid_frames: usize,
    /// `acts[0]` is the waveform; `acts[l + 1]` the output of conv layer `l`
    /// (time-major, `frames x channels`).
    pub acts: Vec<Vec<T>>,
    conv_frames: Vec<usize>,
    conv_xhat: Vec<Vec<T>>,
    conv_rstd: Vec<Vec<T>>,
    conv_y: Vec<Vec<T>>,
    blocks: Vec<BlockCache<T>>,
    final_xhat: Vec<T>,
    final_rstd: Vec<T>,
    /// Final-norm features, `frames x dim`.
    pub features: Vec<T>,
    pub embedding: Vec<T>,
    pub logits: Vec<T>,
}

fn lin<'a, T>(p: &'a [T], l: &LinearIdx) -> (&'a [T], &'a [T]) {
    (&p[l.w..l.w + l.out * l.inp], &p[l.b..l.b + l.out])
}

fn lin_mut<'a, T>(g: &'a mut [T], l: &LinearIdx) -> (&'a mut [T], &'a mut [T]) {
    debug_assert_eq!(l.b, l.w + l.out * l.inp);
    g[l.w..l.b + l.out].split_at_mut(l.out * l.inp)
}

fn norm<'a, T>(p: &'a [T], n: &NormIdx) -> (&'a [T], &'a [T]) {
    (&p[n.g..n.g + n.dim], &p[n.b..n.b + n.dim])
}

fn norm_mut<'a, T>(g: &'a mut [T], n: &NormIdx) -> (&'a mut [T], &'a mut [T]) {
    debug_assert_eq!(n.b, n.g + n.dim);
    g[n.g..n.b + n.dim].split_at_mut(n.dim)
}

fn out_len(len: usize, kernel: usize, stride: usize) -> usize {
    if len < kernel {
        0
    } else {
        (len - kernel) / stride + 1
    }
}

fn apply_linear<T: Real>(p: &[T], l: &LinearIdx, x: &[T], rows: usize) -> Vec<T> {
    let (w, b) = lin(p, l);
    let mut y = vec![T::zero(); rows * l.out];
    linear(Rows { data: x, count: rows, stride: l.inp }, w, b, &mut y);
    y
}

fn apply_norm<T: Real>(p: &[T], n: &NormIdx, x: &[T], eps: T) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / n.dim;
    let (g, b) = norm(p, n);
    let mut xhat = vec![T::zero(); x.len()];
    let mut rstd = vec![T::zero(); rows];
    let mut y = vec![T::zero(); x.len()];
    layer_norm(x, n.dim, g, b, eps, &mut xhat, &mut rstd, &mut y);
    (xhat, rstd, y)
}

pub(crate) fn forward_row<T: Real>(cfg: &ModelConfig, idx: &Index, p: &[T], samples: &[T], n_valid: usize) -> RowCache<T> {
    let eps = T::of(cfg.ln_eps);
    let mut acts = vec![samples.to_vec()];
    let mut len = samples.len();
    let mut valid = n_valid;
    let mut conv_frames = Vec::new();
    let mut conv_xhat = Vec::new();
    let mut conv_rstd = Vec::new();
    let mut conv_y = Vec::new();
    for c in &idx.convs {
        let frames = out_len(len, c.kernel, c.stride);
        valid = out_len(valid, c.kernel, c.stride);
        let (w, b) = lin(p, &c.lin);
        let mut z = vec![T::zero(); frames * c.lin.out];
        let input = acts.last().unwrap();
        linear(Rows { data: input, count: frames, stride: c.stride * c.in_ch }, w, b, &mut z);
        let (xhat, rstd, y) = apply_norm(p, &c.norm, &z, eps);
        let a: Vec<T> = y.iter().map(|&v| gelu(v)).collect();
        acts.push(a);
        conv_frames.push(frames);
        conv_xhat.push(xhat);
        conv_rstd.push(rstd);
        conv_y.push(y);
        len = frames;
    }
    let frames = len;
    let vf = valid;
    let d = cfg.dim;
    let heads = cfg.heads;
    let dh = d / heads;
    let scale = T::one() / T::of(dh as f64).sqrt();

    let mut hs = vec![apply_linear(p, &idx.proj, acts.last().unwrap(), frames)];
    let mut blocks = Vec::with_capacity(idx.blocks.len());
    for blk in &idx.blocks {
        let h_in = hs.last().unwrap();
        let (xhat1, rstd1, u) = apply_norm(p, &blk.ln1, h_in, eps);
        let q = apply_linear(p, &blk.q, &u, frames);
        let k = apply_linear(p, &blk.k, &u, frames);
        let v = apply_linear(p, &blk.v, &u, frames);
        let mut probs = vec![T::zero(); heads * frames * frames];
        let mut ctx = vec![T::zero(); frames * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..frames {
                let qi = &q[i * d + off..i * d + off + dh];
                let row = &mut probs[(h * frames + i) * frames..(h * frames + i + 1) * frames];
                let mut m = T::neg_infinity();
                for j in 0..vf {
                    let s = dot(qi, &k[j * d + off..j * d + off + dh]) * scale;
                    row[j] = s;
                    m = m.max(s);
                }
                let mut sum = T::zero();
                for r in row[..vf].iter_mut() {
                    *r = (*r - m).exp_();
                    sum += *r;
                }
                let inv = T::one() / sum;
                let ci = &mut ctx[i * d + off..i * d + off + dh];
                for j in 0..vf {
                    row[j] *= inv;
                    axpy(row[j], &v[j * d + off..j * d + off + dh], ci);
                }
            }
        }
        let attn = apply_linear(p, &blk.o, &ctx, frames);
        let h1: Vec<T> = h_in.iter().zip(&attn).map(|(&a, &b)| a + b).collect();
        let (xhat2, rstd2, w) = apply_norm(p, &blk.ln2, &h1, eps);
        let f_pre = apply_linear(p, &blk.ff1, &w, frames);
        let f_act: Vec<T> = f_pre.iter().map(|&v| gelu(v)).collect();
        let ff = apply_linear(p, &blk.ff2, &f_act, frames);
        let h2: Vec<T> = h1.iter().zip(&ff).map(|(&a, &b)| a + b).collect();
        blocks.push(BlockCache { xhat1, rstd1, u, q, k, v, probs, ctx, xhat2, rstd2, w, f_pre, f_act });
        hs.push(h2);
    }
    let (final_xhat, final_rstd, features) = apply_norm(p, &idx.final_ln, hs.last().unwrap(), eps);

    let mut embedding = vec![T::zero(); d];
    for t in 0..vf {
        for (e, &f) in embedding.iter_mut().zip(&features[t * d..(t + 1) * d]) {
            *e += f;
        }
    }
    let inv = T::one() / T::of(vf as f64);
    embedding.iter_mut().for_each(|e| *e *= inv);
    let logits = apply_linear(p, &idx.head, &embedding, 1);

    RowCache {
        n_valid,
        frames,
        valid_frames: vf,
        acts,
        conv_frames,
        conv_xhat,
        conv_rstd,
        conv_y,
        blocks,
        final_xhat,
        final_rstd,
        features,
        embedding,
        logits,
    }
}

pub(crate) fn backward_row<T: Real>(cfg: &ModelConfig, idx: &Index, p: &[T], c: &RowCache<T>, dlogits: &[T], g: &mut [T]) {
    let d = cfg.dim;
    let heads = cfg.heads;
    let dh = d / heads;
    let frames = c.frames;
    let vf = c.valid_frames;
    let scale = T::one() / T::of(dh as f64).sqrt();

    // Head.
    let mut de = vec![T::zero(); d];
    {
        let (w, _) = lin(p, &idx.head);
        let (dw, db) = lin_mut(g, &idx.head);
        linear_backward(Rows { data: &c.embedding, count: 1, stride: d }, w, dlogits, dw, db, Some(&mut de));
    }

    // Pooling spreads the embedding gradient evenly over valid frames.
    let mut dz = vec![T::zero(); frames * d];
    let inv = T::one() / T::of(vf as f64);
    for t in 0..vf {
        for (o, &e) in dz[t * d..(t + 1) * d].iter_mut().zip(&de) {
            *o = e * inv;
        }
    }
    let mut dh_buf = vec![T::zero(); frames * d];
    {
        let (gain, _) = norm(p, &idx.final_ln);
        let (dg, dbias) = norm_mut(g, &idx.final_ln);
        layer_norm_backward(&dz, d, gain, &c.final_xhat, &c.final_rstd, dg, dbias, &mut dh_buf);
    }

    for (bi, blk) in idx.blocks.iter().enumerate().rev() {
        let bc = &c.blocks[bi];
        let dh2 = dh_buf;

        // Feed-forward branch: h2 = h1 + ff2(gelu(ff1(norm2(h1)))).
        let mut dh1 = dh2.clone();
        let mut df = vec![T::zero(); frames * cfg.ff_dim];
        {
            let (w, _) = lin(p, &blk.ff2);
            let (dw, db) = lin_mut(g, &blk.ff2);
            linear_backward(Rows { data: &bc.f_act, count: frames, stride: cfg.ff_dim }, w, &dh2, dw, db, Some(&mut df));
        }
        for (x, &pre) in df.iter_mut().zip(&bc.f_pre) {
            *x *= gelu_grad(pre);
        }
        let mut dw_in = vec![T::zero(); frames * d];
        {
            let (w, _) = lin(p, &blk.ff1);
            let (dw, db) = lin_mut(g, &blk.ff1);
            linear_backward(Rows { data: &bc.w, count: frames, stride: d }, w, &df, dw, db, Some(&mut dw_in));
        }
        {
            let (gain, _) = norm(p, &blk.ln2);
            let (dg, dbias) = norm_mut(g, &blk.ln2);
            layer_norm_backward(&dw_in, d, gain, &bc.xhat2, &bc.rstd2, dg, dbias, &mut dh1);
        }

        // Attention branch: h1 = h_in + out(attn(norm1(h_in))).
        let mut dh_in = dh1.clone();
        let mut dctx = vec![T::zero(); frames * d];
        {
            let (w, _) = lin(p, &blk.o);
            let (dw, db) = lin_mut(g, &blk.o);
            linear_backward(Rows { data: &bc.ctx, count: frames, stride: d }, w, &dh1, dw, db, Some(&mut dctx));
        }
        let mut dq = vec![T::zero(); frames * d];
        let mut dk = vec![T::zero(); frames * d];
        let mut dv = vec![T::zero(); frames * d];
        let mut dp = vec![T::zero(); vf];
        for h in 0..heads {
            let off = h * dh;
            // Invalid query frames carry no gradient.
            for i in 0..vf {
                let dci = &dctx[i * d + off..i * d + off + dh];
                let row = &bc.probs[(h * frames + i) * frames..(h * frames + i) * frames + vf];
                let mut s = T::zero();
                for j in 0..vf {
                    dp[j] = dot(dci, &bc.v[j * d + off..j * d + off + dh]);
                    s += row[j] * dp[j];
                    axpy(row[j], dci, &mut dv[j * d + off..j * d + off + dh]);
                }
                let qi = &bc.q[i * d + off..i * d + off + dh];
                for j in 0..vf {
                    let ds = row[j] * (dp[j] - s) * scale;
                    axpy(ds, &bc.k[j * d + off..j * d + off + dh], &mut dq[i * d + off..i * d + off + dh]);
                    axpy(ds, qi, &mut dk[j * d + off..j * d + off + dh]);
                }
            }
        }
        let mut du = vec![T::zero(); frames * d];
        for (l, dy) in [(&blk.q, &dq), (&blk.k, &dk), (&blk.v, &dv)] {
            let (w, _) = lin(p, l);
            let (dw, db) = lin_mut(g, l);
            linear_backward(Rows { data: &bc.u, count: frames, stride: d }, w, dy, dw, db, Some(&mut du));
        }
        {
            let (gain, _) = norm(p, &blk.ln1);
            let (dg, dbias) = norm_mut(g, &blk.ln1);
            layer_norm_backward(&du, d, gain, &bc.xhat1, &bc.rstd1, dg, dbias, &mut dh_in);
        }
        dh_buf = dh_in;
    }

    // Projection from conv channels to the model dimension.
    let last = idx.convs.len();
    let c_last = idx.convs[last - 1].lin.out;
    let mut da = vec![T::zero(); frames * c_last];
    {
        let (w, _) = lin(p, &idx.proj);
        let (dw, db) = lin_mut(g, &idx.proj);
        linear_backward(Rows { data: &c.acts[last], count: frames, stride: c_last }, w, &dh_buf, dw, db, Some(&mut da));
    }

    for (l, cv) in idx.convs.iter().enumerate().rev() {
        let frames_l = c.conv_frames[l];
        let out = cv.lin.out;
        for (x, &y) in da.iter_mut().zip(&c.conv_y[l]) {
            *x *= gelu_grad(y);
        }
        let mut dzl = vec![T::zero(); frames_l * out];
        {
            let (gain, _) = norm(p, &cv.norm);
            let (dg, dbias) = norm_mut(g, &cv.norm);
            layer_norm_backward(&da, out, gain, &c.conv_xhat[l], &c.conv_rstd[l], dg, dbias, &mut dzl);
        }
        let input = &c.acts[l];
        let rows = Rows { data: input, count: frames_l, stride: cv.stride * cv.in_ch };
        let (w, _) = lin(p, &cv.lin);
        let (dw, db) = lin_mut(g, &cv.lin);
        if l > 0 {
            let mut dprev = vec![T::zero(); input.len()];
            linear_backward(rows, w, &dzl, dw, db, Some(&mut dprev));
            da = dprev;
        } else {
            linear_backward(rows, w, &dzl, dw, db, None);
        }
    }
}
