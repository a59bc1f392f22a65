#![allow(dead_code)]

pub mod gradcheck;
pub mod metrics;

use adnet_core::numerics::Tensor2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform_vec(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn uniform_tensor(rng: &mut impl Rng, channels: usize, length: usize) -> Tensor2 {
    Tensor2::new(channels, length, uniform_vec(rng, channels * length, -2.0, 2.0)).unwrap()
}

/// Central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (f(x + h) - f(x - h)) / (2.0 * h)
}

/// True when the one-sided slopes of a piecewise-linear function differ,
/// i.e. a kink lies within `h` of `x`.
pub fn straddles_kink(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> bool {
    let (lo, mid, hi) = (f(x - h), f(x), f(x + h));
    ((hi - mid) - (mid - lo)).abs() > 1e-12 * (1.0 + mid.abs())
}

/// Relative error with a unit floor on the denominator.
pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1.0)
}
