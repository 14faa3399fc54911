//! Deterministic random streams derived from a single `u64` seed.
//!
//! Every stochastic routine in the crate draws from a [`ChaCha8Rng`]
//! keyed by `(seed, domain, index)`. Domains are short static strings
//! ("optimizer/restart", "sim/prep", ...) and the index picks one stream
//! within a domain (restart number, bootstrap trial, ...). Streams for
//! distinct `(domain, index)` pairs are statistically independent, and a
//! routine that parallelizes over indices gets the same draws no matter
//! how the work is scheduled.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 mixer; a cheap, well-distributed way to
/// stretch a seed into independent key material.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a hash of the domain string, used to separate substream families.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Deterministic stream for `(seed, domain, index)`.
///
/// The 256-bit ChaCha key is filled with successive splitmix64 outputs
/// seeded by a mix of the three inputs, so streams differing in any one
/// input are unrelated.
pub fn stream(seed: u64, domain: &str, index: u64) -> ChaCha8Rng {
    let mut index = index;
    let mut state = seed ^ fnv1a(domain.as_bytes()).rotate_left(17);
    // Decorrelate the three inputs before key expansion.
    state = state.wrapping_add(splitmix64(&mut index));
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Deterministic derived `u64` seed for `(seed, domain, index)`; handy
/// when an API takes a bare seed rather than an RNG.
pub fn derived_seed(seed: u64, domain: &str, index: u64) -> u64 {
    let mut state = seed
        ^ fnv1a(domain.as_bytes())
        ^ index.wrapping_mul(0xd6e8_feb8_6659_fd93);
    splitmix64(&mut state)
}
