//! Parameter-efficient finetuning from first principles.
//!
//! This crate implements VeRA (vector-based random matrix adaptation) and a
//! LoRA baseline on top of a small, dependency-free numeric core:
//!
//! - [`rng`]: a portable, bit-exact random number stream (xoshiro256**
//!   seeded through SplitMix64) and the matrix initialization schemes, so
//!   frozen matrices can be regenerated from a seed on any platform.
//! - [`linalg`]: dense matrices and vectors with float64 accumulation.
//! - [`adapter`]: adapted linear layers — construction, forward, analytic
//!   backward, weight merging, and the single-vector ablation variants.
//! - [`accounting`]: trainable-parameter and storage-byte planning.
//! - [`checkpoint`]: the seed + scaling-vector checkpoint format and
//!   merged-weight export.
//! - [`model`], [`task`], [`train`]: a desk-scale transformer harness with
//!   AdamW, separate head/adapter learning rates, and a linear LR schedule.
//! - [`gradcheck`]: finite-difference verification of every backward pass.
//! - [`sweep`]: rank sweeps and the adaptation-magnitude report.

pub mod accounting;
pub mod adapter;
pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod sweep;
pub mod task;
pub mod tensorfile;
pub mod train;

pub use error::{Error, Result};
