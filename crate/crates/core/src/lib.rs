//! Allocation-only core of a deepfake speech countermeasure pipeline.
//!
//! Everything in this crate is a pure function of its inputs plus an explicit
//! random stream: waveform preprocessing, RawBoost augmentation,
//! duration-bucketed batch planning, a small convolutional + transformer
//! detector with hand-written backpropagation, AdamW with a warmup/decay
//! schedule, and equal-error-rate scoring. File formats, the training loop
//! driver and the command line live in the `cmtrain` crate.
//!
//! The crate is `no_std` and only needs `alloc`. The `std` feature exists so
//! downstream crates can opt into `std::error::Error` impls.
#![cfg_attr(not(any(feature = "std", test)), no_std)]

extern crate alloc;

pub mod audio;
pub mod augment;
pub mod batcher;
pub mod catalog;
pub mod dsp;
mod error;
pub mod eval;
pub mod model;
pub mod num;
pub mod optim;
pub mod rng;

pub use error::{Error, Result};

/// Sample rate every training and scoring path expects.
pub const SAMPLE_RATE: u32 = 16_000;
