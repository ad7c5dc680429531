//! Small numeric helpers shared across models.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use statrs::function::gamma::{digamma, ln_gamma};

/// ln(2π)
pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derive an independent stream from a base seed, e.g. one per document.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// log σ(t), stable for large |t|.
#[inline]
pub fn log_sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        -(-t).exp().ln_1p()
    } else {
        t - t.exp().ln_1p()
    }
}

/// log Pois(y | rate) for a nonnegative integer count `y`.
#[inline]
pub fn log_poisson(y: f64, rate: f64) -> f64 {
    if y == 0.0 {
        -rate
    } else {
        y * rate.ln() - rate - ln_gamma(y + 1.0)
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}
