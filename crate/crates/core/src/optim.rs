//! AdamW with decoupled weight decay, and the piecewise-linear learning-rate
//! schedule used for post-training and fine-tuning.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::num::Real;
use crate::{Error, Result};

/// Linear warmup to `peak_lr`, then linear decay to zero over `decay_steps`.
/// In constant mode the rate is `peak_lr` at every step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub peak_lr: f64,
    pub warmup_steps: u64,
    pub decay_steps: u64,
    pub constant: bool,
}

impl Default for Schedule {
    fn default() -> Self {
        Self::post_train()
    }
}

impl Schedule {
    /// 1e-7 peak, 80k warmup, 800k decay.
    pub fn post_train() -> Self {
        Schedule {
            peak_lr: 1e-7,
            warmup_steps: 80_000,
            decay_steps: 800_000,
            constant: false,
        }
    }

    /// Same shape with the 5e-6 peak used for the HuBERT-XL regime.
    pub fn post_train_high() -> Self {
        Schedule {
            peak_lr: 5e-6,
            ..Self::post_train()
        }
    }

    /// Desk-scale preset: large enough to move a small randomly initialised model.
    pub fn toy() -> Self {
        Schedule {
            peak_lr: 1e-3,
            warmup_steps: 500,
            decay_steps: 5_000,
            constant: false,
        }
    }

    /// Constant 1e-6 used for fine-tuning.
    pub fn fine_tune() -> Self {
        Schedule {
            peak_lr: 1e-6,
            warmup_steps: 1,
            decay_steps: 1,
            constant: true,
        }
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name {
            "post_train" => Ok(Self::post_train()),
            "post_train_high" => Ok(Self::post_train_high()),
            "toy" => Ok(Self::toy()),
            "fine_tune" => Ok(Self::fine_tune()),
            _ => Err(Error::InvalidConfig(alloc::format!("unknown schedule preset `{name}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps == 0 || self.decay_steps == 0 {
            return Err(Error::InvalidConfig("warmup_steps and decay_steps must be positive".into()));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::InvalidConfig("peak_lr must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Step at which the decaying schedule reaches zero.
    pub fn end_step(&self) -> u64 {
        self.warmup_steps + self.decay_steps
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        if self.constant {
            return self.peak_lr;
        }
        if step <= self.warmup_steps {
            return self.peak_lr * (step as f64 / self.warmup_steps as f64);
        }
        let end = self.end_step();
        if step >= end {
            return 0.0;
        }
        self.peak_lr * ((end - step) as f64 / self.decay_steps as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// First and second moments for a flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub config: AdamWConfig,
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(config: AdamWConfig, n_params: usize) -> Self {
        OptimizerState {
            config,
            m: alloc::vec![T::zero(); n_params],
            v: alloc::vec![T::zero(); n_params],
            step: 0,
        }
    }

    /// One AdamW update. `name_of` maps a flat index to a parameter name for
    /// error reporting. Parameters are untouched if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: f64, name_of: impl Fn(usize) -> String) -> Result<()> {
        if params.len() != grads.len() || params.len() != self.m.len() {
            return Err(Error::Shape(alloc::format!(
                "{} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(alloc::format!("gradient of {}", name_of(i))));
        }
        if !(lr >= 0.0) {
            return Err(Error::InvalidArgument("learning rate must be non-negative".into()));
        }
        self.step += 1;
        let c = &self.config;
        let t = self.step as i32;
        let bc1 = T::of(1.0 - libm::pow(c.beta1, t as f64));
        let bc2 = T::of(1.0 - libm::pow(c.beta2, t as f64));
        let b1 = T::of(c.beta1);
        let b2 = T::of(c.beta2);
        let one = T::one();
        let eps = T::of(c.eps);
        let lr_t = T::of(lr);
        let shrink = T::of(1.0 - lr * c.weight_decay);
        for i in 0..params.len() {
            let g = grads[i];
            let m = b1 * self.m[i] + (one - b1) * g;
            let v = b2 * self.v[i] + (one - b2) * g * g;
            self.m[i] = m;
            self.v[i] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            let p = params[i] * shrink;
            params[i] = p - lr_t * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}
