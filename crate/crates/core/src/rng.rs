//! Keyed, counter-based random streams.
//!
//! Every random decision in a simulation is drawn from a ChaCha8 stream whose
//! 256-bit key is the tuple `(seed, purpose, a, b)`, e.g. `(seed, Minibatch,
//! round, client << 32 | epoch)`. Streams are independent of evaluation order,
//! so parallel client execution cannot perturb the draws.
//!
//! Normal and Gamma variates are generated here with `libm` rather than taken
//! from a distribution crate, which keeps the floating-point path pinned:
//! Box–Muller for normals and Marsaglia–Tsang (with the `U^(1/a)` boost for
//! shapes below one) for Gamma.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// What a stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Participants = 1,
    Minibatch = 2,
    Partition = 3,
    SyntheticData = 4,
    Init = 5,
    Verify = 6,
}

/// A deterministic random stream identified by its key.
#[derive(Debug, Clone)]
pub struct Stream {
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64, purpose: Purpose, a: u64, b: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        key[8..16].copy_from_slice(&(purpose as u64).to_le_bytes());
        key[16..24].copy_from_slice(&a.to_le_bytes());
        key[24..].copy_from_slice(&b.to_le_bytes());
        Self {
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`, safe to take the logarithm of.
    fn uniform_open_low(&mut self) -> f64 {
        1.0 - self.uniform()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Gamma(shape, 1) variate. `shape` must be positive.
    pub fn gamma(&mut self, shape: f64) -> f64 {
        debug_assert!(shape > 0.0);
        if shape < 1.0 {
            let boost = libm::pow(self.uniform_open_low(), 1.0 / shape);
            return self.gamma(shape + 1.0) * boost;
        }
        let d = shape - 1.0 / 3.0;
        let c = 1.0 / libm::sqrt(9.0 * d);
        loop {
            let (x, v) = loop {
                let x = self.standard_normal();
                let v = 1.0 + c * x;
                if v > 0.0 {
                    break (x, v * v * v);
                }
            };
            let u = self.uniform_open_low();
            if u < 1.0 - 0.0331 * x * x * x * x {
                return d * v;
            }
            if libm::log(u) < 0.5 * x * x + d * (1.0 - v + libm::log(v)) {
                return d * v;
            }
        }
    }

    /// A point on the simplex drawn from a symmetric Dirichlet distribution.
    pub fn dirichlet(&mut self, concentration: f64, len: usize) -> alloc::vec::Vec<f64> {
        let mut draws: alloc::vec::Vec<f64> = (0..len).map(|_| self.gamma(concentration)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            draws.iter_mut().for_each(|p| *p /= total);
        } else {
            // Every Gamma draw underflowed (tiny concentration); put the mass
            // on one uniformly chosen coordinate, the limiting behaviour.
            let pick = rand::Rng::random_range(&mut self.rng, 0..len);
            draws[pick] = 1.0;
        }
        draws
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}
