//! Joint-target clinical decision prediction.
//!
//! A patient's event history is encoded by an LSTM, the static record by a
//! log-linear sigmoid map, and the concatenated latent vector is scored
//! against every (intention, type) decision pair through a Tucker-3 core
//! tensor. The crate also carries the marginal reference model, the
//! non-learned baselines, a from-scratch trainer (backpropagation through
//! time, RMSprop, early stopping), ranking metrics, independence tests and a
//! synthetic corpus generator.
//!
//! Everything here is pure computation over `alloc`; file formats and the
//! command line live in the `jointdx` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod stats;
pub mod synth;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};

/// Seeded generator used for every random draw in the crate (xoshiro256++).
pub type Rng = rand_xoshiro::Xoshiro256PlusPlus;

/// Builds the crate generator from a 64-bit seed.
pub fn seeded_rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
