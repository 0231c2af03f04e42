//! Host-side tooling for the `cmtrain` detector: audio I/O, manifests,
//! checkpoints, training loops, evaluation and the command-line interface.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod evaluate;
pub mod manifest;
pub mod preprocess;
pub mod synth;
pub mod train;
pub mod wav;

pub use cmtrain_core as core;
