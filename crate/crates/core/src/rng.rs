//! Counter-based stream derivation.
//!
//! Every random stream in the crate is addressed by a `(seed, domain, index)`
//! triple and nothing else, so a result never depends on how work was split
//! across threads or in which order tasks ran.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream domains. Each consumer of randomness gets its own tag so that,
/// e.g., the environment stream for step 3 never collides with walk replica 3.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Environment = 0x656e_7600,
    EnvSeedPerN = 0x656e_7601,
    Walk = 0x7761_6c6b,
    Xi = 0x7869_0000,
    SplitAdvance = 0x7370_6c00,
    SplitResample = 0x7370_6c01,
    GammaReplica = 0x6761_6d00,
    Moments = 0x6d6f_6d00,
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed from `(seed, domain, index)`.
pub fn derive_seed(seed: u64, domain: Domain, index: u64) -> u64 {
    let a = splitmix64(seed ^ splitmix64(domain as u64));
    splitmix64(a ^ splitmix64(index.wrapping_add(0x632B_E59B_D9B4_E019)))
}

/// Independent ChaCha8 stream for `(seed, domain, index)`.
pub fn stream(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let base = derive_seed(seed, domain, index);
    let mut key = [0u8; 32];
    let mut s = base;
    for chunk in key.chunks_exact_mut(8) {
        s = splitmix64(s);
        chunk.copy_from_slice(&s.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
