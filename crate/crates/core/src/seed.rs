//! Deterministic seed derivation for parallel replications.
//!
//! Every trajectory/replication draws its randomness from a rng derived from
//! `(master_seed, index)` so that results do not depend on scheduling order.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// splitmix64 finalizer; good avalanche, cheap.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed for replication `index` of `master`.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    splitmix64(splitmix64(master) ^ splitmix64(index.wrapping_mul(0xa076_1d64_78bd_642f)))
}

/// The rng used throughout the crate.
pub type Rng = ChaCha12Rng;

/// Builds the rng for one replication.
pub fn rng_for(master: u64, index: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, index))
}

/// Builds the rng for a single-stream run.
pub fn rng_from(seed: u64) -> Rng {
    ChaCha12Rng::seed_from_u64(seed)
}
