//! Seeded random streams.
//!
//! Every consumer of randomness draws from its own ChaCha stream derived
//! from one run seed, so changing how one component samples leaves the
//! others untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Split = 1,
    Init = 2,
    Shuffle = 3,
    Pairs = 4,
    Dropout = 5,
    Blobs = 6,
    KMeans = 7,
    Subset = 8,
    Batches = 9,
    FinetuneDropout = 10,
}

/// Independent generator for `stream` under `seed`.
pub fn stream(seed: u64, stream: Stream) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}
