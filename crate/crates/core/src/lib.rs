//! Core algorithms for unified text / human-motion / object-motion modeling.
//!
//! Everything in this crate is `no_std` (with `alloc`): dense numerics with
//! hand-derived gradients, a procedural human-object interaction generator,
//! VQ-VAE motion tokenizers, the unified token vocabulary, a point-cloud
//! geometry encoder, a small decoder-only transformer with grouped-query
//! attention and LoRA, the conditional task family with two-stage training,
//! and the evaluation metrics. File formats, configuration files and the
//! command line live in the `hoi` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod data;
pub mod error;
pub mod geom;
pub mod lm;
pub mod metrics;
pub mod numerics;
pub mod tasks;
pub mod vocab;
pub mod vqvae;

pub use error::{Error, Result};
