//! Counter-based random streams.
//!
//! A stream is a pure function of `(master_seed, key, trial, purpose)`, so a
//! trial draws the same numbers whichever worker runs it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. Each purpose gets its own ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Modulation = 0,
    Channel = 1,
    Symbols = 2,
    Noise = 3,
}

const PURPOSES: u64 = 4;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a list of words into one seed.
pub fn mix_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6d6f_6465_6d66_7573, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Returns the stream for one trial and purpose under a cell key.
pub fn trial_stream(master_seed: u64, key: u64, trial: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[master_seed, key]));
    rng.set_stream(trial.wrapping_mul(PURPOSES).wrapping_add(purpose as u64));
    rng
}
