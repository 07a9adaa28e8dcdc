//! Deterministic, platform-stable RNG streams.
//!
//! Every random choice in the crate draws from a ChaCha8 stream keyed by a
//! master seed plus a list of integer tags (purpose, epoch, record index, ...).
//! Streams are stateless functions of their tags, so work can be sharded or
//! resumed without replaying earlier draws.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags keep unrelated streams disjoint even for equal (epoch, index).
pub mod stream {
    pub const PARAM_INIT: u64 = 1;
    pub const IMAGE_MASK: u64 = 2;
    pub const REPORT_MASK: u64 = 3;
    pub const EPOCH_SHUFFLE: u64 = 4;
    pub const SYNTH_RECORD: u64 = 5;
    pub const LABEL_SUBSET: u64 = 6;
    pub const FINETUNE: u64 = 7;
}

/// splitmix64 finalizer; full-avalanche mixing of one word.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a ChaCha8 stream from a master seed and a tag list.
pub fn derive_rng(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    let mut state = mix(seed);
    for (i, chunk) in key.chunks_mut(8).enumerate() {
        let mut word = state ^ mix(i as u64 ^ 0xa5a5_a5a5_a5a5_a5a5);
        for &t in tags {
            word = mix(word ^ mix(t));
        }
        chunk.copy_from_slice(&word.to_le_bytes());
        state = mix(state);
    }
    ChaCha8Rng::from_seed(key)
}
