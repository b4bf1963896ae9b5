//! Allocation-only core of the `readcomp` reading-comprehension harness.
//!
//! Everything in this crate is a pure function over in-memory values: the
//! uniform example model and synthetic family generator, tokenization and
//! tf-idf ranking, chunk preprocessing, dataset sampling, the linear span
//! extractor, evaluation metrics, and the generalization/transfer analysis.
//! File formats, dataset adapters and the command line live in the `readcomp`
//! crate.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod analysis;
pub mod corpus;
mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod sampler;
pub mod text;

pub use error::{Error, Result};

/// Derives an independent 64-bit seed from a master seed and a salt.
///
/// Used wherever a per-record or per-restart RNG stream must not depend on
/// iteration order.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
