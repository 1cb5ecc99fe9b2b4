//! Seeded random streams. Every random draw in a run comes from a stream
//! derived from the run seed, so runs are reproducible bit for bit.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_OBJECTIVE: u64 = 1;
pub const STREAM_CONSTRAINT: u64 = 2;
pub const STREAM_BATCH: u64 = 3;
pub const STREAM_AUX: u64 = 4;

pub fn stream(seed: u64, id: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Generator tied to one stream sample, used to realise its noise.
pub fn sample_rng(sample: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(sample)
}
