//! Deterministic derivation of independent random streams from one user seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a over the seed followed by `label` and `extra`.
pub fn derive(seed: u64, label: &str, extra: &[u64]) -> u64 {
    let mut h = FNV_OFFSET;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(FNV_PRIME);
        }
    };
    eat(&seed.to_le_bytes());
    eat(label.as_bytes());
    eat(&[0xff]);
    for v in extra {
        eat(&v.to_le_bytes());
    }
    h
}

pub fn rng(seed: u64, label: &str, extra: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, label, extra))
}
