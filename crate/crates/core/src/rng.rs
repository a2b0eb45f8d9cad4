//! Seeded random streams.
//!
//! Every randomized task owns a ChaCha8 stream keyed by `(seed, task)`, so
//! independent tasks can run in any order (or in parallel) and still
//! reproduce the sequential output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn stream(seed: u64, task: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(task);
    rng
}

/// Well-known task identifiers so unrelated consumers never share a stream.
pub mod task {
    pub const SPLIT: u64 = 1;
    pub const TEST_SET: u64 = 2;
    pub const KMEANS: u64 = 3;
    pub const EXTERNAL_SAMPLE: u64 = 4;
    pub const OE_SHUFFLE: u64 = 5;
    pub const MODEL_INIT: u64 = 6;
    pub const ID_BATCHES: u64 = 7;
    pub const OE_BATCHES: u64 = 8;
    /// Internal outlier `t` uses stream `INTERNAL_BASE + t`.
    pub const INTERNAL_BASE: u64 = 1 << 32;
}
