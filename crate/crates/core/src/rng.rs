//! Seeded random streams.
//!
//! Every consumer of randomness receives its own generator, derived from the
//! experiment seed, a purpose tag and an index (usually the AL iteration):
//!
//! ```text
//! state = splitmix64(splitmix64(seed ^ fnv1a(purpose)) ^ index)
//! ```
//!
//! The state seeds a ChaCha8 generator. Since the derivation never depends on
//! which strategies are running, adding a strategy to an experiment leaves all
//! existing streams untouched.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

pub mod purpose {
    pub const SEED_SET: &str = "seed-set";
    pub const MAIN_INIT: &str = "main-init";
    pub const MAIN_TRAIN: &str = "main-train";
    pub const DISC_INIT: &str = "disc-init";
    pub const DISC_TRAIN: &str = "disc-train";
    pub const ACQUIRE_RANDOM: &str = "acquire-random";
    pub const MC_DROPOUT: &str = "mc-dropout";
    pub const DISC_SUBSAMPLE: &str = "disc-subsample";
    pub const SYNTHETIC: &str = "synthetic";
    pub const ASO: &str = "aso";
    pub const DATAMAP: &str = "datamap";
    pub const SPLIT: &str = "split";
}

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, purpose: &str, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ fnv1a(purpose.as_bytes())) ^ index)
}

pub fn stream(seed: u64, purpose: &str, index: u64) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, purpose, index))
}
