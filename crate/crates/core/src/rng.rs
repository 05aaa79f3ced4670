//! Seeded random streams.
//!
//! Every stochastic routine takes a `u64` seed and derives one ChaCha8
//! stream per independent unit of work (bootstrap replicate, simulation
//! replication), so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator for work item `index` under `seed`.
pub fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for nested stochastic stages, e.g. the bootstrap inside one
/// simulation replication. SplitMix64 finaliser of `seed ^ salt`.
pub fn derive_seed(seed: u64, salt: u64) -> u64 {
    let mut z =
        (seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
