//! Seeded random streams.
//!
//! All randomness comes from ChaCha8 (the 8-round ChaCha stream cipher as a
//! counter-mode generator, as implemented by `rand_chacha`). A stream is fully
//! determined by two numbers:
//!
//! * key: the 64-bit seed written little-endian into bytes 0..8 of the 32-byte
//!   ChaCha key, remaining bytes zero;
//! * stream id: the 64-bit ChaCha nonce, used to split work into independent
//!   substreams (one per shard of samples).
//!
//! Uniform doubles are `(next_u64() >> 11) · 2⁻⁵³`, which lies in `[0, 1)`.
//! Named substreams (one per pipeline stage) use [`derive_seed`]: FNV-1a over
//! the UTF-8 name, XORed into the seed, then one SplitMix64 step.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

#[inline]
pub fn uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn derive_seed(seed: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    splitmix64(seed ^ h)
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
