//! Deterministic random number generation.
//!
//! Two generators are used:
//!
//! * [`seeded`] returns a ChaCha8 stream seeded from a `u64`; it drives
//!   parameter initialization, shuffling and corpus synthesis.
//! * [`NoiseStream`] is the counter-based generator behind the Gaussian
//!   mechanism. Its key is `SHA-256(seed || step || parameter name)`, the
//!   resulting 32 bytes seed a ChaCha20 block cipher, and normals are drawn
//!   with the Box-Muller transform. A noise value is therefore a pure
//!   function of `(seed, step, name, index)` and is identical on every
//!   platform.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::{ChaCha20Rng, ChaCha8Rng};
use sha2::{Digest, Sha256};

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent seed for a named sub-stream.
pub fn derive_seed(seed: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(label.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Standard normal draw via Box-Muller on two open-interval uniforms.
pub fn standard_normal<R: RngCore>(rng: &mut R) -> f64 {
    // (0, 1] so ln never sees zero
    let u1 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gaussian noise stream keyed by `(seed, step, parameter name)`.
pub struct NoiseStream {
    rng: ChaCha20Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, step: u64, name: &str) -> Self {
        let mut h = Sha256::new();
        h.update(b"dpmeet-noise-v1");
        h.update(seed.to_le_bytes());
        h.update(step.to_le_bytes());
        h.update((name.len() as u64).to_le_bytes());
        h.update(name.as_bytes());
        let key: [u8; 32] = h.finalize().into();
        Self {
            rng: ChaCha20Rng::from_seed(key),
        }
    }

    pub fn next_normal(&mut self) -> f64 {
        standard_normal(&mut self.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_depends_on_every_key_component() {
        let base: Vec<f64> = {
            let mut s = NoiseStream::new(1, 0, "w");
            (0..4).map(|_| s.next_normal()).collect()
        };
        for (seed, step, name) in [(2, 0, "w"), (1, 1, "w"), (1, 0, "b")] {
            let mut s = NoiseStream::new(seed, step, name);
            let other: Vec<f64> = (0..4).map(|_| s.next_normal()).collect();
            assert_ne!(base, other);
        }
        let mut again = NoiseStream::new(1, 0, "w");
        let repeat: Vec<f64> = (0..4).map(|_| again.next_normal()).collect();
        assert_eq!(base, repeat);
    }

    #[test]
    fn normal_moments() {
        let mut s = NoiseStream::new(42, 7, "moments");
        let n = 200_000;
        let xs: Vec<f64> = (0..n).map(|_| s.next_normal()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }
}
