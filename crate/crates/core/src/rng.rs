//! Seeded random streams.
//!
//! Every stochastic stage draws from ChaCha8 seeded through
//! [`rand::SeedableRng::seed_from_u64`]. The generator name is recorded in
//! run manifests so a run can be replayed exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Name written into run manifests.
pub const GENERATOR_NAME: &str = "chacha8/seed_from_u64";

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed for the `index`-th independent sub-stream of `seed`.
pub fn derive(seed: u64, index: u64) -> u64 {
    seed.wrapping_add(index)
}
