//! Master-seed fan-out.
//!
//! Every random stream in the toolkit is derived from a master seed plus a
//! stage label and an item id through a stable (platform- and
//! version-independent) hash, so that work can be reordered or parallelized
//! without changing any output.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stable hash of a string, used for word and utterance identities.
pub fn hash_str(s: &str) -> u64 {
    splitmix64(fnv1a(FNV_OFFSET, s.as_bytes()))
}

/// Derives a child seed from `(seed, stage, item)`.
pub fn derive(seed: u64, stage: &str, item: &str) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &seed.to_le_bytes());
    h = fnv1a(h, stage.as_bytes());
    h = fnv1a(h, &[0xff]);
    h = fnv1a(h, item.as_bytes());
    splitmix64(h)
}

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derive_rng(seed: u64, stage: &str, item: &str) -> Rng {
    rng(derive(seed, stage, item))
}
