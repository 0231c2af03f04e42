//! Versioned binary checkpoints of named little-endian f32 tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "CMTCKPT\0"
//! version    u32
//! fingerprint u64     ModelConfig::fingerprint()
//! config     u32 length + UTF-8 JSON of the ModelConfig
//! step       u64
//! count      u32
//! count x { u32 name length, name, u32 ndim, ndim x u64 dims, f32 data }
//! ```
//!
//! Model tensors use the layout names. Optimizer moments are stored as
//! `adam.m.<name>` / `adam.v.<name>`; run bookkeeping as `meta.*`.

use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use cmtrain_core::model::{Model, ModelConfig};
use cmtrain_core::optim::{AdamWConfig, OptimizerState};

pub const MAGIC: &[u8; 8] = b"CMTCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

const BEST_VAL_LOSS: &str = "meta.best_val_loss";

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<u64>,
    pub data: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub fingerprint: u64,
    pub config: ModelConfig,
    pub step: u64,
    pub tensors: Vec<Tensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let config = serde_json::to_string(&self.config).expect("model config serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.fingerprint.to_le_bytes());
        out.extend_from_slice(&(config.len() as u32).to_le_bytes());
        out.extend_from_slice(config.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.name.len() as u32).to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for d in &t.shape {
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        ensure!(r.take(8)? == MAGIC, "not a checkpoint (bad magic)");
        let version = r.u32()?;
        ensure!(version == FORMAT_VERSION, "unsupported checkpoint version {version}");
        let fingerprint = r.u64()?;
        let clen = r.u32()? as usize;
        let config: ModelConfig =
            serde_json::from_slice(r.take(clen)?).context("checkpoint model config is malformed")?;
        config.validate()?;
        ensure!(
            config.fingerprint() == fingerprint,
            "checkpoint fingerprint {fingerprint:016x} does not match its stored config"
        );
        let step = r.u64()?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let nlen = r.u32()? as usize;
            let name = String::from_utf8(r.take(nlen)?.to_vec()).context("tensor name is not UTF-8")?;
            let ndim = r.u32()? as usize;
            let shape = (0..ndim).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
            let n = shape.iter().try_fold(1u64, |a, &d| a.checked_mul(d)).context("tensor size overflows")?;
            let raw = r.take(n as usize * 4).with_context(|| format!("tensor `{name}` is truncated"))?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name, shape, data });
        }
        ensure!(r.pos == bytes.len(), "{} trailing bytes after the last tensor", bytes.len() - r.pos);
        Ok(Checkpoint {
            fingerprint,
            config,
            step,
            tensors,
        })
    }

    /// Writes through a temporary file and a rename, so an interrupted save
    /// never clobbers the previous checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).with_context(|| format!("cannot write `{}`", tmp.display()))?;
        fs::rename(&tmp, path).with_context(|| format!("cannot move checkpoint into `{}`", path.display()))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).with_context(|| format!("cannot read checkpoint `{}`", path.display()))?;
        Self::from_bytes(&bytes).with_context(|| format!("invalid checkpoint `{}`", path.display()))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            bail!("unexpected end of checkpoint at byte {}", self.pos);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Everything a training run needs to continue bit-exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<f32>,
    /// Absent in inference-only checkpoints.
    pub optimizer: Option<OptimizerState<f32>>,
    pub step: u64,
    pub best_val_loss: Option<f32>,
}

impl ModelState {
    pub fn to_checkpoint(&self, model: &Model) -> Checkpoint {
        let layout = model.layout();
        let mut tensors = Vec::new();
        let mut push = |prefix: &str, src: &[f32]| {
            for t in &layout.tensors {
                tensors.push(Tensor {
                    name: format!("{prefix}{}", t.name),
                    shape: t.shape.iter().map(|&d| d as u64).collect(),
                    data: src[t.range()].to_vec(),
                });
            }
        };
        push("", &self.params);
        if let Some(opt) = &self.optimizer {
            push("adam.m.", &opt.m);
            push("adam.v.", &opt.v);
        }
        if let Some(b) = self.best_val_loss {
            tensors.push(Tensor {
                name: BEST_VAL_LOSS.into(),
                shape: vec![1],
                data: vec![b],
            });
        }
        Checkpoint {
            fingerprint: self.config.fingerprint(),
            config: self.config.clone(),
            step: self.step,
            tensors,
        }
    }

    /// Rebuilds the model and state. Moments are restored only if both are
    /// present; `adam` supplies the hyperparameters, which are not stored.
    pub fn from_checkpoint(ck: &Checkpoint, adam: AdamWConfig) -> Result<(Model, ModelState)> {
        let model = Model::new(ck.config.clone())?;
        let layout = model.layout();
        let gather = |prefix: &str| -> Result<Option<Vec<f32>>> {
            let mut out = Vec::with_capacity(layout.total);
            for t in &layout.tensors {
                let name = format!("{prefix}{}", t.name);
                let Some(found) = ck.tensor(&name) else {
                    if prefix.is_empty() {
                        bail!("checkpoint lacks tensor `{name}`");
                    }
                    return Ok(None);
                };
                let want: Vec<u64> = t.shape.iter().map(|&d| d as u64).collect();
                ensure!(found.shape == want, "tensor `{name}` has shape {:?}, expected {:?}", found.shape, want);
                out.extend_from_slice(&found.data);
            }
            Ok(Some(out))
        };
        let params = gather("")?.expect("model tensors are mandatory");
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            bail!("checkpoint parameter {} is not finite", layout.describe(i));
        }
        let optimizer = match (gather("adam.m.")?, gather("adam.v.")?) {
            (Some(m), Some(v)) => Some(OptimizerState {
                config: adam,
                m,
                v,
                step: ck.step,
            }),
            _ => None,
        };
        for t in &ck.tensors {
            let known = t.name.starts_with("adam.") || t.name == BEST_VAL_LOSS || layout.get(&t.name).is_some();
            ensure!(known, "checkpoint has unknown tensor `{}`", t.name);
        }
        let best_val_loss = ck.tensor(BEST_VAL_LOSS).and_then(|t| t.data.first().copied());
        let state = ModelState {
            config: ck.config.clone(),
            params,
            optimizer,
            step: ck.step,
            best_val_loss,
        };
        Ok((model, state))
    }
}

/// Loads a checkpoint for inference.
pub fn load_model(path: &Path) -> Result<(Model, Vec<f32>)> {
    let ck = Checkpoint::load(path)?;
    let (model, state) = ModelState::from_checkpoint(&ck, AdamWConfig::default())
        .with_context(|| format!("checkpoint `{}`", path.display()))?;
    Ok((model, state.params))
}
