//! Deterministic random streams.
//!
//! A root seed yields one seed per trial; each trial seed is split into
//! independent ChaCha streams, one per purpose, so adding an algorithm to a
//! run never shifts the randomness seen by another.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::record::Algorithm;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Environment,
    Offline,
    Rollout(Algorithm),
    Coin(Algorithm),
}

impl Stream {
    fn id(self) -> u64 {
        let alg = |a: Algorithm| Algorithm::ALL.iter().position(|&b| b == a).unwrap_or(0) as u64;
        match self {
            Stream::Environment => 0,
            Stream::Offline => 1,
            Stream::Rollout(a) => 2 + 2 * alg(a),
            Stream::Coin(a) => 3 + 2 * alg(a),
        }
    }
}

pub fn trial_seed(root_seed: u64, trial: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(root_seed);
    rng.set_stream(trial as u64);
    rng.next_u64()
}

/// The stream for `purpose` within the trial seeded by `trial_seed`.
pub fn stream(trial_seed: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(purpose.id());
    rng
}
