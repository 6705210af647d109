//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha20 stream (the
//! `rand_chacha` implementation: 20 rounds, 64-bit block counter, stream id 0)
//! keyed by four little-endian `u64` words: `seed ‖ domain ‖ a ‖ b`. The
//! `domain` word separates unrelated consumers (synthesis, weight init,
//! dropout, shuffling) so that adding draws in one never perturbs another.
//!
//! Derived values are produced with fixed, documented transforms rather than
//! `rand` distributions so the numbers can be reproduced in other languages:
//!
//! * uniform `[0, 1)`: `(next_u64 >> 11) · 2⁻⁵³`
//! * uniform integer in `[lo, hi]`: `lo + next_u64 mod (hi − lo + 1)`
//! * standard normal: Box–Muller on `u1 = 1 − uniform`, `u2 = uniform`,
//!   yielding `√(−2 ln u1)·cos(2π u2)` then `√(−2 ln u1)·sin(2π u2)`
//! * shuffle: Fisher–Yates from the last index down, `j = next_u64 mod (i + 1)`

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Domain separators for the key's second word.
pub mod domain {
    pub const SYNTH: u64 = 1;
    pub const INIT: u64 = 2;
    pub const DROPOUT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const SPLIT: u64 = 5;
    pub const VALIDATION: u64 = 6;
}

pub struct SeededStream {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl SeededStream {
    pub fn new(seed: u64, domain: u64, a: u64, b: u64) -> Self {
        let mut key = [0u8; 32];
        for (chunk, word) in key.chunks_exact_mut(8).zip([seed, domain, a, b]) {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        Self {
            inner: ChaCha20Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in the closed range `[lo, hi]`.
    pub fn int_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo;
        if span == u64::MAX {
            return self.next_u64();
        }
        lo + self.next_u64() % (span + 1)
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare_normal = Some(r * theta.sin());
        r * theta.cos()
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = (self.next_u64() % (i as u64 + 1)) as usize;
            items.swap(i, j);
        }
    }
}
