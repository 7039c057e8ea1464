//! Seeded parameter initialization.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

use crate::num::Real;

/// Deterministic stream of named sub-seeds, so adding a parameter tensor to
/// one model never reshuffles another model's initialization.
pub struct SeedStream {
    rng: ChaCha12Rng,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        SeedStream {
            rng: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn derive(&mut self) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(self.rng.gen())
    }
}

/// Standard normal sample via Box-Muller (keeps the draw count fixed).
pub fn gaussian<T: Real>(rng: &mut ChaCha12Rng) -> T {
    let u1: f64 = rng.gen_range(1e-12..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    T::of((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos())
}

/// He initialization: N(0, 2/fan_in), for ReLU-family layers.
pub fn he_matrix<T: Real>(rng: &mut ChaCha12Rng, rows: usize, cols: usize, fan_in: usize) -> Array2<T> {
    let std = T::of((2.0 / fan_in as f64).sqrt());
    Array2::from_shape_fn((rows, cols), |_| gaussian::<T>(rng) * std)
}

/// Xavier initialization: N(0, 1/fan_in), for tanh/sigmoid layers.
pub fn xavier_matrix<T: Real>(
    rng: &mut ChaCha12Rng,
    rows: usize,
    cols: usize,
    fan_in: usize,
) -> Array2<T> {
    let std = T::of((1.0 / fan_in as f64).sqrt());
    Array2::from_shape_fn((rows, cols), |_| gaussian::<T>(rng) * std)
}
