//! TOML run configuration shared by `post-train` and `fine-tune`.
//!
//! ```toml
//! seed = 7
//! out_dir = "runs/base"             # relative paths resolve against this file
//! manifests = ["data/manifest.jsonl"]
//! total_steps = 880000
//! validation_interval = 100000
//!
//! [schedule]
//! preset = "post_train"             # post_train | post_train_high | toy | fine_tune
//! peak_lr = 1e-7                    # any field overrides the preset
//!
//! [model]      # ModelConfig fields
//! [rawboost]   # RawBoostConfig fields
//! [batcher]    # BatcherConfig fields
//! [optimizer]  # AdamWConfig fields
//! [fine_tune]  # train_fraction
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cmtrain_core::augment::RawBoostConfig;
use cmtrain_core::batcher::BatcherConfig;
use cmtrain_core::model::ModelConfig;
use cmtrain_core::optim::{AdamWConfig, Schedule};
use serde::Deserialize;

/// Environment variable naming the config file when `--config` is absent.
pub const CONFIG_ENV: &str = "CMTRAIN_CONFIG";

pub const DEFAULT_VALIDATION_INTERVAL: u64 = 100_000;
pub const DEFAULT_FINE_TUNE_STEPS: u64 = 6_000;

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub preset: Option<String>,
    pub peak_lr: Option<f64>,
    pub warmup_steps: Option<u64>,
    pub decay_steps: Option<u64>,
    pub constant: Option<bool>,
}

impl ScheduleSection {
    pub fn resolve(&self, default_preset: &str) -> Result<Schedule> {
        let mut s = Schedule::from_preset(self.preset.as_deref().unwrap_or(default_preset))?;
        if let Some(v) = self.peak_lr {
            s.peak_lr = v;
        }
        if let Some(v) = self.warmup_steps {
            s.warmup_steps = v;
        }
        if let Some(v) = self.decay_steps {
            s.decay_steps = v;
        }
        if let Some(v) = self.constant {
            s.constant = v;
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineTuneSection {
    pub train_fraction: f64,
}

impl Default for FineTuneSection {
    fn default() -> Self {
        FineTuneSection { train_fraction: 0.9 }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub out_dir: PathBuf,
    pub manifests: Vec<PathBuf>,
    /// Defaults to the schedule end for post-training, 6000 for fine-tuning.
    #[serde(default)]
    pub total_steps: Option<u64>,
    #[serde(default = "default_validation_interval")]
    pub validation_interval: u64,
    /// Global L2 norm clip; off when absent.
    #[serde(default)]
    pub grad_clip: Option<f64>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub rawboost: RawBoostConfig,
    #[serde(default)]
    pub batcher: BatcherConfig,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub fine_tune: FineTuneSection,
}

fn default_validation_interval() -> u64 {
    DEFAULT_VALIDATION_INTERVAL
}

impl RunConfig {
    /// A config with every section at its default.
    pub fn new(out_dir: PathBuf, manifests: Vec<PathBuf>) -> Self {
        RunConfig {
            seed: 0,
            out_dir,
            manifests,
            total_steps: None,
            validation_interval: DEFAULT_VALIDATION_INTERVAL,
            grad_clip: None,
            model: ModelConfig::default(),
            rawboost: RawBoostConfig::default(),
            batcher: BatcherConfig::default(),
            schedule: ScheduleSection::default(),
            optimizer: AdamWConfig::default(),
            fine_tune: FineTuneSection::default(),
        }
    }

    /// Parses `text`, resolving relative paths against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text)?;
        cfg.out_dir = anchor(base, &cfg.out_dir);
        cfg.manifests = cfg.manifests.iter().map(|p| anchor(base, p)).collect();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("cannot read config `{}`", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        Self::from_toml(&text, base).with_context(|| format!("invalid config `{}`", path.display()))
    }

    /// Checks every section for internal consistency.
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.rawboost.validate()?;
        self.batcher.validate()?;
        if self.validation_interval == 0 {
            bail!("validation_interval must be positive");
        }
        if self.manifests.is_empty() {
            bail!("no manifests configured");
        }
        if let Some(c) = self.grad_clip {
            if !(c > 0.0) {
                bail!("grad_clip must be positive");
            }
        }
        let f = self.fine_tune.train_fraction;
        if !(f > 0.0 && f < 1.0) {
            bail!("fine_tune.train_fraction {f} outside (0, 1)");
        }
        Ok(())
    }
}

fn anchor(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
