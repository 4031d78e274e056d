//! Helpers shared by the integration tests: random instances and an
//! independent LP oracle.

#![allow(dead_code)]

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_wasserstein::{DiscreteMeasure, GroundCost};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` atoms in [−1, 1]^d with random weights summing to one.
pub fn random_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    DiscreteMeasure::new(pts, w.iter().map(|x| x / s).collect()).unwrap()
}

/// Atoms on a small integer lattice so that measures share support points.
pub fn lattice_measure(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DiscreteMeasure {
    let pts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random_range(0..4) as f64).collect()).collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = w.iter().sum();
    DiscreteMeasure::new(pts, w.iter().map(|x| x / s).collect()).unwrap()
}

pub fn measure_strategy(d: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1usize..7).prop_flat_map(move |n| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n),
            prop::collection::vec(0.05f64..1.0, n),
        )
            .prop_map(|(pts, w)| {
                let s: f64 = w.iter().sum();
                DiscreteMeasure::new(pts, w.iter().map(|x| x / s).collect()).unwrap()
            })
    })
}

pub fn line(points: &[f64], weights: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::new(points.iter().map(|&x| vec![x]).collect(), weights.to_vec()).unwrap()
}

/// min Σ c π subject to row sums ≤ `rows`, column sums ≤ `cols` (or = when
/// `cols_exact`), total mass `total`.
pub fn lp_partial(rows: &[f64], cols: &[f64], c: &[f64], total: f64, cols_exact: bool) -> f64 {
    let (n, m) = (rows.len(), cols.len());
    let mut pb = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<_> = c.iter().map(|&x| pb.add_var(x, (0.0, f64::INFINITY))).collect();
    for i in 0..n {
        let row: Vec<_> = (0..m).map(|j| (vars[i * m + j], 1.0)).collect();
        pb.add_constraint(row.as_slice(), ComparisonOp::Le, rows[i]);
    }
    let op = if cols_exact { ComparisonOp::Eq } else { ComparisonOp::Le };
    for j in 0..m {
        let col: Vec<_> = (0..n).map(|i| (vars[i * m + j], 1.0)).collect();
        pb.add_constraint(col.as_slice(), op, cols[j]);
    }
    let all: Vec<_> = vars.iter().map(|&v| (v, 1.0)).collect();
    pb.add_constraint(all.as_slice(), ComparisonOp::Eq, total);
    pb.solve().unwrap().objective()
}

/// W_p^ε(μ, ν)^p by LP.
pub fn lp_robust(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost, eps: f64) -> f64 {
    lp_partial(mu.weights(), nu.weights(), &cost.matrix(mu, nu), 1.0 - eps, false)
}
