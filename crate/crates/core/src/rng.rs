//! Seed derivation.
//!
//! Every random quantity comes from a ChaCha8 generator seeded from a root
//! `u64` and placed on a dedicated stream. The stream id packs a
//! [`Purpose`] tag in the high 32 bits and an index (agent, trial, ...) in the
//! low 32 bits, so streams never overlap and each one is independent of how
//! many draws the others consumed.
//!
//! Gaussian features use `rand_distr::StandardNormal` (ziggurat transform of
//! the uniform ChaCha output), which is a pure function of the stream.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u32)]
pub enum Purpose {
    Labels = 1,
    Features = 2,
    Flips = 3,
    /// Per-agent training sample indices; index = agent.
    Training = 4,
    /// Per-trial root seed; index = trial.
    Trial = 5,
    Dataset = 6,
    Holdout = 7,
    /// The independent copy `S̃` used by the stability estimator.
    Alternate = 8,
    TrainingSeed = 9,
    PairSubsample = 10,
}

pub fn stream_rng(seed: u64, purpose: Purpose, index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | index as u64);
    rng
}

/// A child seed for `(purpose, index)` under `root`.
pub fn derive_seed(root: u64, purpose: Purpose, index: u32) -> u64 {
    stream_rng(root, purpose, index).next_u64()
}
