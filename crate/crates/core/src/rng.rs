//! Seed streams.
//!
//! Every consumer of randomness in a run draws from its own ChaCha stream,
//! keyed by `(seed, purpose)`. The ChaCha stream id is the purpose, so
//! adding draws to one consumer never shifts the numbers another consumer
//! sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator type used throughout the crate.
pub type Stream = ChaCha8Rng;

/// Independent consumers of randomness within one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    EnvReset = 1,
    PolicySampling = 2,
    Shuffle = 3,
    ReplaySampling = 4,
    Init = 5,
}

/// Returns the generator for `purpose` under `seed`.
pub fn stream(seed: u64, purpose: Purpose) -> Stream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose as u64);
    rng
}

/// The per-purpose generators of one run.
#[derive(Debug, Clone)]
pub struct SeedStreams {
    pub env_reset: Stream,
    pub policy: Stream,
    pub shuffle: Stream,
    pub replay: Stream,
    pub init: Stream,
}

impl SeedStreams {
    pub fn new(seed: u64) -> Self {
        Self {
            env_reset: stream(seed, Purpose::EnvReset),
            policy: stream(seed, Purpose::PolicySampling),
            shuffle: stream(seed, Purpose::Shuffle),
            replay: stream(seed, Purpose::ReplaySampling),
            init: stream(seed, Purpose::Init),
        }
    }
}
