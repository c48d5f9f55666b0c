//! Per-shot random streams.
//!
//! A shot's generator is ChaCha8 keyed by `(seed, run)` and positioned on stream
//! `shot`, so each shot's randomness is a pure function of its coordinates and
//! sampling results do not depend on how shots are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ShotRng = ChaCha8Rng;

/// Identifies an independent batch of shots under one seed (one experiment setting,
/// one repeat-until-success study, ...).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RunId(pub u64);

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generator for shot `shot` of `run` under `seed`.
pub fn shot_rng(seed: u64, run: RunId, shot: u64) -> ShotRng {
    let mut state = seed ^ run.0.rotate_left(32);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(shot);
    rng
}
