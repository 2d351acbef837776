//! Seeded random streams.
//!
//! Every stream is ChaCha20 (`rand_chacha::ChaCha20Rng`) keyed with
//! `SHA-256("nc-ood/v1" ‖ seed as u64 LE ‖ role tag)`. Uniforms take the top
//! 53 bits of `next_u64`; normals use the Box-Muller transform with the
//! second variate cached. Integer draws use the 128-bit multiply-high map
//! `(x · n) >> 64`. Anything implementing those four rules reproduces the
//! same datasets and training traces.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone)]
pub struct Stream {
    inner: ChaCha20Rng,
    spare_normal: Option<f64>,
}

impl Stream {
    /// Child stream for `(seed, tag)`. Distinct tags give independent
    /// streams, so regenerating one role never disturbs another.
    pub fn derive(seed: u64, tag: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"nc-ood/v1");
        h.update(seed.to_le_bytes());
        h.update(tag.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        Self {
            inner: ChaCha20Rng::from_seed(key),
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    /// Integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.next_u64() as u128 * n as u128) >> 64) as usize
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
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}
