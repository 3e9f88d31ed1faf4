//! Reproducible random streams.
//!
//! Streams are ChaCha8 instances keyed by a 64-bit seed and a 64-bit stream
//! id. ChaCha is counter based, so distinct `(seed, stream)` pairs give
//! independent sequences without any shared state between workers.
//!
//! Layout:
//! * a trial inside a sweep gets `derive_seed(master, &[cell, trial])`;
//! * within one simulation, node `m` draws from stream `m` of the trial seed;
//! * design construction uses stream [`DESIGN_STREAM`] of its own seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const DESIGN_STREAM: u64 = u64::MAX;
pub const AUX_STREAM: u64 = u64::MAX - 1;

pub fn stream(seed: u64, stream_id: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for a path of indices below `master`.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D))))
}
