#![allow(dead_code)]

use std::path::{Path, PathBuf};

use cmtrain::config::RunConfig;
use cmtrain::synth::{write_toy_corpus, ArtifactParams, ToyCorpusSpec, ToySplit};
use cmtrain_core::catalog::{ArtifactCategory, Manifest, Split};
use cmtrain_core::model::{ConvSpec, ModelConfig};

/// A model small enough to train for dozens of steps in a unit test.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        conv: vec![
            ConvSpec { channels: 4, kernel: 16, stride: 8 },
            ConvSpec { channels: 8, kernel: 10, stride: 5 },
        ],
        dim: 8,
        depth: 1,
        heads: 2,
        ff_dim: 16,
        ..ModelConfig::default()
    }
}

/// 16 train, 8 val and 8 test clips of a fraction of a second.
pub fn tiny_corpus(dir: &Path, seed: u64) -> Manifest {
    let spec = ToyCorpusSpec {
        seed,
        dataset: "tiny".into(),
        artifacts: ArtifactParams::source(),
        categories: vec![
            ArtifactCategory::Genuine,
            ArtifactCategory::Vocoded,
            ArtifactCategory::Restored,
            ArtifactCategory::NeuralCodec,
        ],
        splits: vec![
            ToySplit { split: Split::Train, count: 16, min_s: 0.2, max_s: 0.5 },
            ToySplit { split: Split::Val, count: 8, min_s: 0.2, max_s: 0.5 },
            ToySplit { split: Split::Test, count: 8, min_s: 0.5, max_s: 1.2 },
        ],
    };
    write_toy_corpus(dir, &spec).unwrap()
}

pub fn tiny_run(corpus: &Path, out: PathBuf, steps: u64) -> RunConfig {
    let mut cfg = RunConfig::new(out, vec![corpus.join("manifest.jsonl")]);
    cfg.model = tiny_model();
    cfg.total_steps = Some(steps);
    cfg.validation_interval = 10;
    cfg.batcher.max_batch_seconds = 13.0;
    cfg.schedule.preset = Some("toy".into());
    cfg
}
