//! Seeded random streams.
//!
//! Every stochastic routine draws from a ChaCha8 generator keyed by a 64-bit
//! seed and a stream index, so replicate `k` of a run is reproducible on its
//! own regardless of how many workers process the replicates.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
