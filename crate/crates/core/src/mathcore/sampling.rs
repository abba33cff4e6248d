//! Seeded samplers. All streams come from ChaCha8, so a seed fixes the values
//! on every platform.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};

pub fn sample_gaussian(len: usize, mean: f64, std: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gaussian_from(&mut rng, len, mean, std)
}

pub fn gaussian_from<R: Rng + ?Sized>(rng: &mut R, len: usize, mean: f64, std: f64) -> Result<Vec<f64>> {
    // Normal::new accepts negative std (it mirrors); reject it explicitly.
    if !(std >= 0.0) || !mean.is_finite() {
        return Err(Error::InvalidParam(format!("gaussian with mean {mean}, std {std}")));
    }
    let dist = Normal::new(mean, std).map_err(|e| Error::InvalidParam(e.to_string()))?;
    Ok((0..len).map(|_| dist.sample(rng)).collect())
}

pub fn sample_uniform01(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| rng.random::<f64>()).collect()
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}
