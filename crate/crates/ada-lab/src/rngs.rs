//! Counter-based random streams.
//!
//! Every draw in a Monte Carlo run is keyed by `(seed, replication, round,
//! purpose)`. The key is hashed into a full 256-bit ChaCha8 state, so streams
//! never collide, replications are order-independent, and results are
//! bit-identical no matter how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is consumed for within one `(replication, round)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Conditional draw of the statistic value.
    Statistic,
    /// Player noise draw.
    Noise,
    /// Dataset generation (linear query world).
    Data,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Statistic => 0x51,
            Purpose::Noise => 0x52,
            Purpose::Data => 0x53,
        }
    }
}

// SplitMix64 finalizer; passes through all 64 bits of state.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

fn key_word(lane: u64, seed: u64, rep: u64, round: u64, tag: u64) -> u64 {
    let mut h = mix(seed ^ lane.wrapping_mul(0xa076_1d64_78bd_642f));
    h = mix(h ^ rep);
    h = mix(h ^ round.wrapping_mul(0xe703_7ed1_a0b4_28db));
    mix(h ^ tag)
}

/// Deterministic stream for one `(seed, replication, round, purpose)` cell.
pub fn stream(seed: u64, rep: u64, round: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for lane in 0..4u64 {
        let w = key_word(lane, seed, rep, round, purpose.tag());
        key[(lane as usize) * 8..(lane as usize + 1) * 8].copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Folds `(seed, rep)` into a single world seed; the world then keys its own
/// per-draw streams off the draw index.
pub fn world_seed(seed: u64, rep: u64) -> u64 {
    key_word(7, seed, rep, 0, 0x57)
}
