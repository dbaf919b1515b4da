//! Seed derivation. One master seed fans out into independent ChaCha streams,
//! one per purpose, so toggling one source of randomness never perturbs another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Purpose tags for derived random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Arrivals = 1,
    Increments = 2,
    Noise = 3,
    Replication = 4,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// Seed for replication `index` of a Monte Carlo run.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(Stream::Replication as u64);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}
