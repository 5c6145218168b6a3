//! Deterministic RNG streams derived from a master seed.
//!
//! Every consumer of randomness (plant noise, each observer, each Monte Carlo
//! trial) owns its own ChaCha stream, so results do not depend on execution
//! order or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PLANT_STREAM: u64 = 1;
const OBSERVER_STREAM_BASE: u64 = 100;
const TRIAL_STREAM_BASE: u64 = 1 << 32;

pub fn stream(master: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng
}

pub fn observer_stream(master: u64, observer_index: usize) -> ChaCha8Rng {
    stream(master, OBSERVER_STREAM_BASE + observer_index as u64)
}

/// Seed of Monte Carlo trial `index`, a pure function of `(master, index)`.
pub fn trial_seed(master: u64, index: usize) -> u64 {
    stream(master, TRIAL_STREAM_BASE + index as u64).next_u64()
}
