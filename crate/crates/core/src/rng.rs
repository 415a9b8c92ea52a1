//! Keyed random streams.
//!
//! Every random draw in a run comes from a stream identified by the scenario
//! seed and a stable per-entity key. Streams are ChaCha8 generators where the
//! key selects the ChaCha stream number, so two entities never share state and
//! creating a new entity cannot shift the draws of an existing one.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stable label for a random stream: a domain name plus up to two integers
/// (typically an entity id and an attempt counter).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamKey {
    pub domain: &'static str,
    pub a: u64,
    pub b: u64,
}

impl StreamKey {
    pub const fn new(domain: &'static str, a: u64) -> Self {
        Self { domain, a, b: 0 }
    }

    pub const fn with(domain: &'static str, a: u64, b: u64) -> Self {
        Self { domain, a, b }
    }

    /// 64-bit digest of the key; FNV-1a over the domain bytes, then
    /// splitmix64 folding of the two integers.
    pub fn digest(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for &byte in self.domain.as_bytes() {
            h ^= u64::from(byte);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h = splitmix64(h ^ self.a);
        splitmix64(h ^ self.b.rotate_left(32))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random stream for one (seed, key) pair.
#[derive(Debug, Clone)]
pub struct RngStream {
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, key: StreamKey) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(key.digest());
        Self { inner }
    }

    /// Uniform draw in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `[0, n)`. `n` must be non-zero.
    pub fn below(&mut self, n: u32) -> u32 {
        assert!(n > 0, "empty range");
        // Lemire's multiply-shift; bias is below 2^-32 for our ranges.
        ((u64::from(self.inner.next_u32()) * u64::from(n)) >> 32) as u32
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
