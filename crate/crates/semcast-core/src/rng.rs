//! Seedable pseudo-randomness.
//!
//! One generator feeds every stochastic mechanism in the crate: ChaCha8
//! supplies the raw bit stream, uniform floats come from the top 53 bits,
//! and Gaussians are produced with the Marsaglia polar method. Nothing here
//! depends on float-sampling details of an external crate, so a seed pins
//! the exact draws across builds.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

pub struct Prng {
    inner: ChaCha8Rng,
    cached_normal: Option<f64>,
}

impl Prng {
    pub fn seed(seed: u64) -> Self {
        Prng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            cached_normal: None,
        }
    }

    /// Derives an independent stream for a labeled sub-purpose.
    pub fn fork(&self, label: u64) -> Self {
        let mut base = self.inner.clone();
        let s = base.next_u64() ^ label.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        Prng::seed(s)
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in [0, n).
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Modulo bias is below 2^-40 for desk-scale n.
        (self.inner.next_u64() % n as u64) as usize
    }

    /// Standard normal deviate via the polar method.
    pub fn normal(&mut self) -> f64 {
        if let Some(z) = self.cached_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let r = (-2.0 * s.ln() / s).sqrt();
                self.cached_normal = Some(v * r);
                return u * r;
            }
        }
    }
}
