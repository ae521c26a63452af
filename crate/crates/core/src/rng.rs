//! Reproducible random streams.
//!
//! Every replication draws from its own ChaCha stream selected by index from
//! a master seed, so results do not depend on how replications are scheduled
//! across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream `index` of the family keyed by `master_seed`.
pub fn stream(master_seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index);
    rng
}

/// A sub-stream for a secondary purpose inside one replication (for example
/// the path versus the grid). `slot` must be small.
pub fn substream(master_seed: u64, index: u64, slot: u64) -> StreamRng {
    stream(master_seed ^ slot.wrapping_mul(0x9E37_79B9_7F4A_7C15), index)
}
