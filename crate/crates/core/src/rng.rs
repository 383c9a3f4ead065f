//! Counter-based substream seeding.
//!
//! Every random draw in this crate comes from a [`ChaCha8Rng`] keyed by
//! `(seed, stage, index)`. A substream is a pure function of those three
//! values, so workers can be scheduled in any order (or in parallel) and
//! still produce bit-identical output for a given master seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stage tag for channel trace sampling.
pub const STAGE_CHANNEL: u64 = 1;
/// Stage tag for post-hoc trace thinning.
pub const STAGE_THIN: u64 = 2;
/// Stage tag for adversarial sign-vector search.
pub const STAGE_SEARCH: u64 = 3;
/// Stage tag for random input-string draws.
pub const STAGE_INPUT: u64 = 4;
/// Stage tag for randomized bound-check probes.
pub const STAGE_PROBE: u64 = 5;

/// splitmix64 finalizer; decorrelates nearby counter values.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG for substream `index` of the given `stage` under a master `seed`.
pub fn substream(seed: u64, stage: u64, index: u64) -> ChaCha8Rng {
    let key = mix(mix(mix(seed) ^ stage) ^ index);
    ChaCha8Rng::seed_from_u64(key)
}
