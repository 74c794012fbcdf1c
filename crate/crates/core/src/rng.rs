//! Seeded random streams.
//!
//! Every random decision in the pipeline is drawn from a ChaCha stream that is
//! addressed by a root seed and a path of integers. Independent components get
//! independent paths, so changing how one component consumes randomness never
//! shifts the draws of another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type GemRng = ChaCha8Rng;

// Stream tags. Values are arbitrary but must stay stable for reproducibility.
pub const TAG_MAIRL: u64 = 0x4d41_4952;
pub const TAG_REFINE: u64 = 0x5245_464e;
pub const TAG_EVAL: u64 = 0x4556_414c;
pub const TAG_EDGE: u64 = 0x4544_4745;
pub const TAG_SHIFT: u64 = 0x5348_4654;
pub const TAG_DEMO: u64 = 0x4445_4d4f;
pub const TAG_INIT: u64 = 0x494e_4954;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hashes a root seed and a path into a single 64-bit key.
pub fn derive_key(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Opens the stream addressed by `seed` and `path`.
pub fn substream(seed: u64, path: &[u64]) -> GemRng {
    let key = derive_key(seed, path);
    let mut bytes = [0u8; 32];
    let mut k = key;
    for chunk in bytes.chunks_mut(8) {
        k = splitmix64(k);
        chunk.copy_from_slice(&k.to_le_bytes());
    }
    ChaCha8Rng::from_seed(bytes)
}
