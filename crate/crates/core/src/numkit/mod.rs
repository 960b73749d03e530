//! Minimal deterministic numeric kernel: dense matrices, normalization,
//! similarity, softmax, and seeded splittable randomness.
//!
//! All arithmetic is 64-bit. Every operation here is a pure function over
//! immutable inputs; reductions use a fixed accumulation order so results are
//! bit-reproducible.

mod matrix;
mod rng;

pub use matrix::{cosine_sim, row_normalize, softmax_temp, Matrix};
pub use rng::RngStream;
