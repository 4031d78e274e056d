//! Constructed instances shared by the `bench` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_wasserstein::{DiscreteMeasure, GroundCost, Result};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform in [0, 1]^d with random positive weights summing to one.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
    let raw: Vec<f64> = (0..n).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    DiscreteMeasure::new(points, raw.iter().map(|w| w / total).collect()).expect("valid random measure")
}

/// Huber-contaminated pair whose outliers sit farther from the clean support
/// S and from each other than diam(S).
#[derive(Clone, Debug)]
pub struct OutlierFixture {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    /// (1 − ε) μ + ε α.
    pub mu_tilde: DiscreteMeasure,
    /// (1 − ε) ν + ε β.
    pub nu_tilde: DiscreteMeasure,
    pub eps: f64,
    pub diam: f64,
    /// Smallest of d(supp α, S), d(supp β, S), d(supp α, supp β).
    pub m_min: f64,
    /// Largest of the same three distances.
    pub m_max: f64,
}

fn set_distance(a: &DiscreteMeasure, b: &DiscreteMeasure, metric: &GroundCost) -> f64 {
    a.points()
        .flat_map(|x| b.points().map(move |y| metric.distance(x, y)))
        .fold(f64::INFINITY, f64::min)
}

fn mixture(clean: &DiscreteMeasure, outliers: &DiscreteMeasure, eps: f64) -> DiscreteMeasure {
    let mut points: Vec<Vec<f64>> = clean.points().map(<[f64]>::to_vec).collect();
    let mut weights: Vec<f64> = clean.weights().iter().map(|w| (1.0 - eps) * w).collect();
    points.extend(outliers.points().map(<[f64]>::to_vec));
    weights.extend(outliers.weights().iter().map(|w| eps * w));
    DiscreteMeasure::new(points, weights).expect("valid mixture")
}

pub fn far_outlier_fixture(seed: u64, n: usize, d: usize, eps: f64) -> Result<OutlierFixture> {
    let mut r = rng(seed);
    let mu = random_measure(&mut r, n, d);
    let nu = random_measure(&mut r, n, d);
    // Clean atoms live in [0, 1]^d, so diam(S) ≤ √d. Outliers are pushed
    // along the first axis, to opposite sides.
    let gap = 2.0 * (d as f64).sqrt() + 1.0;
    let mut outliers = |sign: f64| {
        let k = 3;
        let pts: Vec<Vec<f64>> = (0..k)
            .map(|_| {
                let mut x: Vec<f64> = (0..d).map(|_| r.random::<f64>()).collect();
                x[0] = if sign > 0.0 { 1.0 + gap + r.random::<f64>() } else { -gap - r.random::<f64>() };
                x
            })
            .collect();
        DiscreteMeasure::new(pts, vec![1.0 / k as f64; k]).expect("valid outliers")
    };
    let alpha = outliers(1.0);
    let beta = outliers(-1.0);
    let metric = GroundCost::euclidean(1.0)?;
    let s = mu.add(&nu)?;
    let diam = s
        .points()
        .flat_map(|x| s.points().map(move |y| (x, y)))
        .map(|(x, y)| metric.distance(x, y))
        .fold(0.0, f64::max);
    let dists = [set_distance(&alpha, &s, &metric), set_distance(&beta, &s, &metric), set_distance(&alpha, &beta, &metric)];
    Ok(OutlierFixture {
        mu_tilde: mixture(&mu, &alpha, eps),
        nu_tilde: mixture(&nu, &beta, eps),
        mu,
        nu,
        eps,
        diam,
        m_min: dists.iter().copied().fold(f64::INFINITY, f64::min),
        m_max: dists.iter().copied().fold(0.0, f64::max),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outliers_are_far() {
        for d in 1..4 {
            let f = far_outlier_fixture(d as u64, 10, d, 0.2).unwrap();
            assert!(f.m_min > f.diam);
            assert!(f.mu_tilde.is_probability() && f.nu_tilde.is_probability());
        }
    }
}
