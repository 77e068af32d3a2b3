//! Per-item random streams.
//!
//! Item `i` of a run seeded with `seed` draws from ChaCha8 stream `i` of the
//! key derived from `seed`, so its values never depend on how the work was
//! scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent generator for item `index` of a run.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
