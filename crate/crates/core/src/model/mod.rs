//! Waveform detector: strided convolutional encoder, pre-norm transformer
//! layers, mask-aware global average pooling and a fully connected head.
//!
//! Parameters live in one flat vector described by a [`ParamLayout`] of
//! named tensors. Gradients and optimizer moments share that layout, which
//! keeps checkpointing and AdamW trivial.
//!
//! Every batch row is processed independently. Padding never leaks into
//! valid outputs: a frame is valid only if its whole receptive field lies
//! inside the row's real samples, attention ignores invalid keys, and pooling
//! averages valid frames only.

mod kernels;
mod network;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::batcher::PaddedBatch;
use crate::catalog::ArtifactCategory;
use crate::num::Real;
use crate::rng::{fnv1a, substream};
use crate::{Error, Result};

pub use network::RowCache;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

/// Output head. `Multiclass` predicts every artifact category; `Binary`
/// predicts genuine versus any artifact. Class 0 is always genuine.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadMode {
    #[default]
    Multiclass,
    Binary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub conv: Vec<ConvSpec>,
    pub dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub num_classes: usize,
    pub head: HeadMode,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            conv: alloc::vec![
                ConvSpec { channels: 16, kernel: 16, stride: 8 },
                ConvSpec { channels: 32, kernel: 10, stride: 5 },
                ConvSpec { channels: 64, kernel: 8, stride: 8 },
            ],
            dim: 64,
            depth: 2,
            heads: 4,
            ff_dim: 128,
            num_classes: ArtifactCategory::ALL.len(),
            head: HeadMode::Multiclass,
            ln_eps: 1e-5,
        }
    }
}

impl ModelConfig {
    pub fn binary() -> Self {
        ModelConfig {
            num_classes: 2,
            head: HeadMode::Binary,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.conv.is_empty() {
            return bad("at least one conv layer is required".into());
        }
        for (i, c) in self.conv.iter().enumerate() {
            if c.channels == 0 || c.kernel == 0 || c.stride == 0 {
                return bad(format!("conv layer {i} has a zero dimension"));
            }
        }
        if self.dim == 0 || self.heads == 0 || self.dim % self.heads != 0 {
            return bad(format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.ff_dim == 0 {
            return bad("ff_dim must be positive".into());
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2".into());
        }
        match self.head {
            HeadMode::Binary if self.num_classes != 2 => return bad("binary head needs num_classes = 2".into()),
            HeadMode::Multiclass if self.num_classes != ArtifactCategory::ALL.len() => {
                return bad(format!("multiclass head needs num_classes = {}", ArtifactCategory::ALL.len()))
            }
            _ => {}
        }
        if !(self.ln_eps > 0.0) {
            return bad("ln_eps must be positive".into());
        }
        Ok(())
    }

    /// Class index a category trains toward.
    pub fn class_of(&self, category: ArtifactCategory) -> usize {
        match self.head {
            HeadMode::Multiclass => category.index(),
            HeadMode::Binary => usize::from(!category.is_genuine()),
        }
    }

    pub fn stride_product(&self) -> usize {
        self.conv.iter().map(|c| c.stride).product()
    }

    /// Samples seen by one output frame.
    pub fn receptive_field(&self) -> usize {
        let mut field = 1;
        let mut jump = 1;
        for c in &self.conv {
            field += (c.kernel - 1) * jump;
            jump *= c.stride;
        }
        field
    }

    /// Frame count after the conv stack: `floor((L - k) / s) + 1` per layer.
    pub fn frames_for(&self, samples: usize) -> usize {
        self.conv.iter().fold(samples, |len, c| {
            if len < c.kernel {
                0
            } else {
                (len - c.kernel) / c.stride + 1
            }
        })
    }

    /// Stable 64-bit identity of the architecture, stored in checkpoints.
    pub fn fingerprint(&self) -> u64 {
        let mut s = String::new();
        for c in &self.conv {
            s.push_str(&format!("conv:{}x{}/{};", c.channels, c.kernel, c.stride));
        }
        s.push_str(&format!(
            "dim:{};depth:{};heads:{};ff:{};classes:{};head:{:?};eps:{:e}",
            self.dim, self.depth, self.heads, self.ff_dim, self.num_classes, self.head, self.ln_eps
        ));
        fnv1a(s.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Named tensors packed back to back in a flat parameter vector.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ParamLayout {
    pub tensors: Vec<TensorSpec>,
    pub total: usize,
}

impl ParamLayout {
    fn push(&mut self, name: String, shape: Vec<usize>) -> usize {
        let offset = self.total;
        let spec = TensorSpec { name, shape, offset };
        self.total += spec.len();
        self.tensors.push(spec);
        offset
    }

    /// Name of the tensor holding flat index `i`, with the element offset.
    pub fn describe(&self, i: usize) -> String {
        match self.tensors.iter().find(|t| t.range().contains(&i)) {
            Some(t) => format!("{}[{}]", t.name, i - t.offset),
            None => format!("<index {i}>"),
        }
    }

    pub fn get(&self, name: &str) -> Option<&TensorSpec> {
        self.tensors.iter().find(|t| t.name == name)
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct LinearIdx {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct NormIdx {
    pub g: usize,
    pub b: usize,
    pub dim: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvIdx {
    pub lin: LinearIdx,
    pub norm: NormIdx,
    pub kernel: usize,
    pub stride: usize,
    pub in_ch: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct BlockIdx {
    pub ln1: NormIdx,
    pub q: LinearIdx,
    pub k: LinearIdx,
    pub v: LinearIdx,
    pub o: LinearIdx,
    pub ln2: NormIdx,
    pub ff1: LinearIdx,
    pub ff2: LinearIdx,
}

#[derive(Clone, Debug)]
pub(crate) struct Index {
    pub convs: Vec<ConvIdx>,
    pub proj: LinearIdx,
    pub blocks: Vec<BlockIdx>,
    pub final_ln: NormIdx,
    pub head: LinearIdx,
}

fn build_layout(cfg: &ModelConfig) -> (ParamLayout, Index) {
    let mut l = ParamLayout::default();
    let linear = |l: &mut ParamLayout, name: &str, out: usize, shape: Vec<usize>| {
        let inp = shape.iter().skip(1).product();
        let w = l.push(format!("{name}.weight"), shape);
        let b = l.push(format!("{name}.bias"), alloc::vec![out]);
        LinearIdx { w, b, inp, out }
    };
    let norm = |l: &mut ParamLayout, name: &str, dim: usize| {
        let g = l.push(format!("{name}.gain"), alloc::vec![dim]);
        let b = l.push(format!("{name}.bias"), alloc::vec![dim]);
        NormIdx { g, b, dim }
    };
    let mut convs = Vec::new();
    let mut in_ch = 1;
    for (i, c) in cfg.conv.iter().enumerate() {
        let lin = linear(&mut l, &format!("conv.{i}"), c.channels, alloc::vec![c.channels, c.kernel, in_ch]);
        let n = norm(&mut l, &format!("conv.{i}.norm"), c.channels);
        convs.push(ConvIdx { lin, norm: n, kernel: c.kernel, stride: c.stride, in_ch });
        in_ch = c.channels;
    }
    let d = cfg.dim;
    let proj = linear(&mut l, "proj", d, alloc::vec![d, in_ch]);
    let mut blocks = Vec::new();
    for i in 0..cfg.depth {
        let p = format!("layers.{i}");
        let ln1 = norm(&mut l, &format!("{p}.norm1"), d);
        let q = linear(&mut l, &format!("{p}.attn.q"), d, alloc::vec![d, d]);
        let k = linear(&mut l, &format!("{p}.attn.k"), d, alloc::vec![d, d]);
        let v = linear(&mut l, &format!("{p}.attn.v"), d, alloc::vec![d, d]);
        let o = linear(&mut l, &format!("{p}.attn.out"), d, alloc::vec![d, d]);
        let ln2 = norm(&mut l, &format!("{p}.norm2"), d);
        let ff1 = linear(&mut l, &format!("{p}.ff.in"), cfg.ff_dim, alloc::vec![cfg.ff_dim, d]);
        let ff2 = linear(&mut l, &format!("{p}.ff.out"), d, alloc::vec![d, cfg.ff_dim]);
        blocks.push(BlockIdx { ln1, q, k, v, o, ln2, ff1, ff2 });
    }
    let final_ln = norm(&mut l, "final_norm", d);
    let head = linear(&mut l, "head", cfg.num_classes, alloc::vec![cfg.num_classes, d]);
    (l, Index { convs, proj, blocks, final_ln, head })
}

/// Frame features for a batch, `rows x frames x dim`, plus validity.
#[derive(Clone, Debug, PartialEq)]
pub struct Encoded<T> {
    pub features: Vec<T>,
    pub frame_mask: Vec<bool>,
    pub rows: usize,
    pub frames: usize,
    pub dim: usize,
}

/// `rows x classes` logits.
#[derive(Clone, Debug, PartialEq)]
pub struct LogitsBatch<T> {
    pub values: Vec<T>,
    pub rows: usize,
    pub classes: usize,
}

impl<T: Real> LogitsBatch<T> {
    pub fn row(&self, b: usize) -> &[T] {
        &self.values[b * self.classes..(b + 1) * self.classes]
    }

    pub fn softmax_row(&self, b: usize) -> Vec<T> {
        softmax(self.row(b))
    }
}

/// Forward results kept for the backward pass.
pub struct ForwardPass<T> {
    pub logits: LogitsBatch<T>,
    caches: Vec<RowCache<T>>,
}

impl<T> ForwardPass<T> {
    pub fn row_cache(&self, b: usize) -> &RowCache<T> {
        &self.caches[b]
    }
}

pub fn softmax<T: Real>(z: &[T]) -> Vec<T> {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp_()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Summed cross-entropy over rows and its gradient with respect to the logits.
pub fn cross_entropy<T: Real>(logits: &LogitsBatch<T>, labels: &[usize]) -> Result<(T, Vec<T>)> {
    if labels.len() != logits.rows {
        return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), logits.rows)));
    }
    if logits.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let mut loss = T::zero();
    let mut grad = Vec::with_capacity(logits.values.len());
    for (b, &y) in labels.iter().enumerate() {
        if y >= logits.classes {
            return Err(Error::InvalidArgument(format!("label {y} outside [0, {})", logits.classes)));
        }
        let (l, g) = row_cross_entropy(logits.row(b), y);
        loss += l;
        grad.extend(g);
    }
    Ok((loss, grad))
}

pub(crate) fn row_cross_entropy<T: Real>(z: &[T], label: usize) -> (T, Vec<T>) {
    let m = z.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = m + z.iter().map(|&v| (v - m).exp_()).sum::<T>().ln_();
    let loss = lse - z[label];
    let grad = z
        .iter()
        .enumerate()
        .map(|(c, &v)| (v - lse).exp_() - if c == label { T::one() } else { T::zero() })
        .collect();
    (loss, grad)
}

/// Genuine-class posterior per row.
pub fn score<T: Real>(logits: &LogitsBatch<T>) -> Vec<T> {
    (0..logits.rows).map(|b| softmax(logits.row(b))[0]).collect()
}

/// Mean of the valid frames of each row.
pub fn pool<T: Real>(features: &[T], frame_mask: &[bool], rows: usize, frames: usize, dim: usize) -> Result<Vec<T>> {
    let mut out = alloc::vec![T::zero(); rows * dim];
    for b in 0..rows {
        let valid = frame_mask[b * frames..(b + 1) * frames].iter().filter(|m| **m).count();
        if valid == 0 {
            return Err(Error::InvalidArgument(format!("row {b} has no valid frames")));
        }
        let e = &mut out[b * dim..(b + 1) * dim];
        for t in 0..frames {
            if frame_mask[b * frames + t] {
                let f = &features[(b * frames + t) * dim..(b * frames + t + 1) * dim];
                for (acc, &v) in e.iter_mut().zip(f) {
                    *acc += v;
                }
            }
        }
        let inv = T::one() / T::of(valid as f64);
        e.iter_mut().for_each(|v| *v *= inv);
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct Model {
    config: ModelConfig,
    layout: ParamLayout,
    index: Index,
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let (layout, index) = build_layout(&config);
        Ok(Model { config, layout, index })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    /// Fan-in scaled uniform weights, zero biases, unit norm gains.
    pub fn init<T: Real>(&self, seed: u64) -> Vec<T> {
        let mut rng = substream(seed, "init", &[]);
        let mut p = alloc::vec![T::zero(); self.layout.total];
        for t in &self.layout.tensors {
            let r = t.range();
            if t.name.ends_with(".weight") {
                let fan_in: usize = t.shape.iter().skip(1).product();
                let bound = 1.0 / libm::sqrt(fan_in as f64);
                for v in &mut p[r] {
                    *v = T::of(rng.random_range(-bound..bound));
                }
            } else if t.name.ends_with(".gain") {
                p[r].iter_mut().for_each(|v| *v = T::one());
            }
        }
        p
    }

    fn check_params<T>(&self, params: &[T]) -> Result<()> {
        if params.len() != self.layout.total {
            return Err(Error::Shape(format!(
                "{} parameters supplied, model has {}",
                params.len(),
                self.layout.total
            )));
        }
        Ok(())
    }

    fn check_row(&self, row: usize, n_valid: usize) -> Result<()> {
        let field = self.config.receptive_field();
        if n_valid < field {
            return Err(Error::TooShort { row, samples: n_valid, field });
        }
        Ok(())
    }

    /// Full forward pass of one (possibly padded) row.
    pub fn forward_row<T: Real>(&self, params: &[T], samples: &[T], n_valid: usize) -> Result<RowCache<T>> {
        self.check_params(params)?;
        self.check_row(0, n_valid)?;
        Ok(network::forward_row(&self.config, &self.index, params, samples, n_valid))
    }

    /// Loss of one row and its gradient with respect to every parameter.
    pub fn row_loss_and_grads<T: Real>(&self, params: &[T], samples: &[T], n_valid: usize, label: usize) -> Result<(T, Vec<T>)> {
        let cache = self.forward_row(params, samples, n_valid)?;
        self.row_backward(params, &cache, label)
    }

    pub fn row_backward<T: Real>(&self, params: &[T], cache: &RowCache<T>, label: usize) -> Result<(T, Vec<T>)> {
        if label >= self.config.num_classes {
            return Err(Error::InvalidArgument(format!("label {label} outside [0, {})", self.config.num_classes)));
        }
        if cache.logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("logits".into()));
        }
        let (loss, dlogits) = row_cross_entropy(&cache.logits, label);
        let mut grads = alloc::vec![T::zero(); self.layout.total];
        network::backward_row(&self.config, &self.index, params, cache, &dlogits, &mut grads);
        Ok((loss, grads))
    }

    pub fn forward<T: Real>(&self, params: &[T], batch: &PaddedBatch<T>) -> Result<ForwardPass<T>> {
        self.check_params(params)?;
        for (b, &n) in batch.lengths.iter().enumerate() {
            self.check_row(b, n)?;
        }
        let caches: Vec<RowCache<T>> = (0..batch.rows())
            .map(|b| network::forward_row(&self.config, &self.index, params, batch.row(b), batch.lengths[b]))
            .collect();
        let classes = self.config.num_classes;
        let mut values = Vec::with_capacity(caches.len() * classes);
        for c in &caches {
            values.extend_from_slice(&c.logits);
        }
        Ok(ForwardPass {
            logits: LogitsBatch { values, rows: caches.len(), classes },
            caches,
        })
    }

    /// Summed loss and gradients. Row gradients are computed separately and
    /// added in row order, matching what a parallel caller would produce.
    pub fn backward<T: Real>(&self, params: &[T], pass: &ForwardPass<T>, labels: &[usize]) -> Result<(T, Vec<T>)> {
        if labels.len() != pass.caches.len() {
            return Err(Error::Shape(format!("{} labels for {} rows", labels.len(), pass.caches.len())));
        }
        let mut total = alloc::vec![T::zero(); self.layout.total];
        let mut loss = T::zero();
        for (cache, &y) in pass.caches.iter().zip(labels) {
            let (l, g) = self.row_backward(params, cache, y)?;
            loss += l;
            accumulate(&mut total, &g);
        }
        Ok((loss, total))
    }

    pub fn loss_and_grads<T: Real>(&self, params: &[T], batch: &PaddedBatch<T>) -> Result<(T, Vec<T>)> {
        let pass = self.forward(params, batch)?;
        self.backward(params, &pass, &batch.labels)
    }

    /// Final-norm frame features for every row, frames counted on the padded width.
    pub fn encode<T: Real>(&self, params: &[T], batch: &PaddedBatch<T>) -> Result<Encoded<T>> {
        let pass = self.forward(params, batch)?;
        let frames = self.config.frames_for(batch.width);
        let dim = self.config.dim;
        let mut features = Vec::with_capacity(batch.rows() * frames * dim);
        let mut frame_mask = Vec::with_capacity(batch.rows() * frames);
        for c in &pass.caches {
            features.extend_from_slice(&c.features);
            frame_mask.extend((0..frames).map(|t| t < c.valid_frames));
        }
        Ok(Encoded { features, frame_mask, rows: batch.rows(), frames, dim })
    }

    /// Pooled embeddings (`rows x dim`) and logits.
    pub fn embed<T: Real>(&self, params: &[T], batch: &PaddedBatch<T>) -> Result<(Vec<T>, LogitsBatch<T>)> {
        let pass = self.forward(params, batch)?;
        let mut emb = Vec::with_capacity(batch.rows() * self.config.dim);
        for c in &pass.caches {
            emb.extend_from_slice(&c.embedding);
        }
        Ok((emb, pass.logits))
    }

    pub fn logits<T: Real>(&self, params: &[T], batch: &PaddedBatch<T>) -> Result<LogitsBatch<T>> {
        Ok(self.forward(params, batch)?.logits)
    }

    /// `logits = W e + b` over pooled embeddings.
    pub fn classify<T: Real>(&self, params: &[T], embeddings: &[T]) -> Result<LogitsBatch<T>> {
        self.check_params(params)?;
        let d = self.config.dim;
        if embeddings.len() % d != 0 {
            return Err(Error::Shape(format!("embedding length {} not a multiple of {d}", embeddings.len())));
        }
        let rows = embeddings.len() / d;
        let h = self.index.head;
        let mut values = alloc::vec![T::zero(); rows * h.out];
        kernels::linear(
            kernels::Rows { data: embeddings, count: rows, stride: d },
            &params[h.w..h.w + h.out * h.inp],
            &params[h.b..h.b + h.out],
            &mut values,
        );
        Ok(LogitsBatch { values, rows, classes: h.out })
    }
}

/// `total += g`, elementwise.
pub fn accumulate<T: Real>(total: &mut [T], g: &[T]) {
    for (t, &v) in total.iter_mut().zip(g) {
        *t += v;
    }
}

#[cfg(test)]
mod tests;
