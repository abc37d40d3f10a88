//! Counter-based random streams.
//!
//! Every stream is a ChaCha8 generator whose key is a hash of
//! `(master seed, step, index, purpose)`, so the numbers a particle sees at
//! a given step do not depend on how work is split across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; keeps streams for different jobs disjoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Propagate = 2,
    Sweep = 3,
    Resample = 4,
    Data = 5,
    Chain = 6,
    Probe = 7,
}

/// Index used for coordinator-level streams (resampling and the like).
pub const COORDINATOR: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream(seed: u64, step: u64, index: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut h = splitmix64(seed);
    h = splitmix64(h ^ step);
    h = splitmix64(h ^ index);
    h = splitmix64(h ^ purpose as u64);
    let mut key = [0u8; 32];
    let mut x = h;
    for chunk in key.chunks_mut(8) {
        x = splitmix64(x);
        chunk.copy_from_slice(&x.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
