//! Seeded random number generation with a draw counter.
//!
//! The counter lets tests (and a debug assertion in the trainer) verify that
//! evaluation-mode forward passes consume no randomness.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A ChaCha8 generator that counts how many times it has been sampled.
#[derive(Debug, Clone)]
pub struct CountingRng {
    inner: ChaCha8Rng,
    draws: u64,
}

impl CountingRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        CountingRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            draws: 0,
        }
    }

    /// Total number of sampling calls made so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }
}

impl RngCore for CountingRng {
    fn next_u32(&mut self) -> u32 {
        self.draws += 1;
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.draws += 1;
        self.inner.fill_bytes(dest)
    }
}
