//! Self-supervised contrastive learning on long-tailed data, rebalanced by
//! dynamically sampled out-of-distribution examples.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`numkit`] — dense matrices, normalization, softmax, seeded randomness
//! - [`datagen`] — synthetic long-tailed datasets, OOD pools, view augmentation
//! - [`encoder`] — small MLP encoder with analytic gradients and SGD
//! - [`losses`] — InfoNCE, distribution-level supervised contrastive loss,
//!   and their combination
//! - [`tailness`] — per-sample tailness scores with momentum smoothing
//! - [`sampler`] — k-means prototypes, cluster budgets, greedy OOD selection
//! - [`eval`] — linear probing, group balancedness, NMM, alignment/uniformity,
//!   augmentation-graph connectivity, tail-discovery ratio
//! - [`config`] / [`experiment`] — experiment configuration and the end-to-end
//!   training loop with run artifacts

pub mod config;
pub mod datagen;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod numkit;
pub mod sampler;
pub mod tailness;

pub use error::{ColtError, Result};
