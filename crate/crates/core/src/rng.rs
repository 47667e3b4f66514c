//! Per-trial random streams.
//!
//! Every random quantity in a frame comes from a stream keyed by
//! `(master seed, purpose)` and selected by the trial index, so results do not
//! depend on how trials are scheduled across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Bits,
    Channel,
    Noise,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Bits => 0x6269_7473,
            Purpose::Channel => 0x6368_616e,
            Purpose::Noise => 0x6e6f_6973,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent stream for one trial and purpose.
pub fn stream(master_seed: u64, trial: u64, purpose: Purpose) -> ChaCha12Rng {
    let mut key = [0u8; 32];
    let mut state = master_seed ^ purpose.tag().rotate_left(32);
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(trial);
    rng
}
