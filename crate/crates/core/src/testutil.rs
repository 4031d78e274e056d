//! Random instances shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::measures::DiscreteMeasure;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random probability measure with `n` atoms in [−1, 1]^d.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let s: f64 = w.iter().sum();
    DiscreteMeasure::new(pts, w.iter().map(|x| x / s).collect()).unwrap()
}

/// Uniform measure on `n` random atoms.
pub fn random_uniform(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    crate::measures::empirical(&pts).unwrap()
}

pub fn line(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec()).unwrap()
}
