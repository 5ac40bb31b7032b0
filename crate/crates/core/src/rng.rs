//! Seeded random streams, a polar-method normal sampler and the standard
//! normal CDF.
//!
//! Every stochastic routine in the crate takes a `u64` seed. Independent
//! sub-streams (per chain, per replication, per component) are derived with
//! [`derive_seed`], a SplitMix64 mix of the root seed and a stream label, so
//! parallel replications never share a generator state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// The generator used throughout the crate.
pub type StreamRng = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `label` from `root`.
///
/// `derive_seed(root, label) = splitmix64(splitmix64(root) ^ splitmix64(label + 1))`.
/// Nested streams are obtained by chaining calls.
pub fn derive_seed(root: u64, label: u64) -> u64 {
    splitmix64(splitmix64(root) ^ splitmix64(label.wrapping_add(1)))
}

pub fn stream(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal draws by the Marsaglia polar method.
///
/// Each accepted pair yields two variates; the second is cached.
#[derive(Debug, Clone)]
pub struct NormalSampler {
    rng: StreamRng,
    spare: Option<f64>,
}

impl NormalSampler {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: stream(seed),
            spare: None,
        }
    }

    pub fn sample(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.rng.random::<f64>() - 1.0;
            let v = 2.0 * self.rng.random::<f64>() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let factor = (-2.0 * s.ln() / s).sqrt();
                self.spare = Some(v * factor);
                return u * factor;
            }
        }
    }

    /// Uniform draw on `[0, 1)` from the same stream.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn rng_mut(&mut self) -> &mut StreamRng {
        &mut self.rng
    }
}

/// Standard normal distribution function, `0.5 * erfc(-x / sqrt 2)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
