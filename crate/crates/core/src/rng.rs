//! Deterministic random streams.
//!
//! Every random draw in the crate goes through [`stream`], which keys a
//! ChaCha20 generator by `(seed, tag)`. ChaCha is counter based, so the
//! streams are identical on every platform and two tags never share state.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// FNV-1a over the tag bytes; used as the ChaCha stream id.
fn tag_hash(tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Random stream for `(seed, tag)`.
pub fn stream(seed: u64, tag: &str) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(tag_hash(tag));
    rng
}
