//! Fixture suites run by `rwp bench`.

use rand::Rng;
use robust_wasserstein::dual::{dual_ascent, AscentConfig};
use robust_wasserstein::estimation::{breakdown_construction, detect_elbow, radius_grid, sweep_radius};
use robust_wasserstein::exact::{solve_robust, solve_standard};
use robust_wasserstein::{GroundCost, Result, RobustProblem};

use crate::fixtures::{far_outlier_fixture, random_measure, rng};

pub const SUITES: [&str; 5] = ["triangle", "duality-gap", "elbow", "exact-recovery", "breakdown"];

#[derive(Clone, Debug)]
pub struct SuiteResult {
    pub name: &'static str,
    pub instances: usize,
    /// Worst observed violation (0 when every instance is within tolerance).
    pub worst: f64,
    pub tolerance: f64,
}

impl SuiteResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

pub fn run_suite(name: &str, seed: u64) -> Result<SuiteResult> {
    match name {
        "triangle" => triangle(seed),
        "duality-gap" => duality_gap(seed),
        "elbow" => elbow(seed),
        "exact-recovery" => exact_recovery(seed),
        "breakdown" => breakdown(seed),
        other => Err(robust_wasserstein::Error::InvalidInput(format!("unknown suite `{other}`"))),
    }
}

fn robust(problem: RobustProblem) -> Result<f64> {
    solve_robust(&problem).map(|s| s.value)
}

fn triangle(seed: u64) -> Result<SuiteResult> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let n = 100;
    for _ in 0..n {
        let d = r.random_range(1..=3);
        let p = [1.0, 1.5, 2.0][r.random_range(0..3)];
        let cost = GroundCost::euclidean(p)?;
        let (a, b, c) = (r.random_range(2..10), r.random_range(2..10), r.random_range(2..10));
        let mu = random_measure(&mut r, a, d);
        let kappa = random_measure(&mut r, b, d);
        let nu = random_measure(&mut r, c, d);
        let e1 = r.random_range(0.0..0.45);
        let e2 = r.random_range(0.0..0.45);
        let lhs = robust(RobustProblem::symmetric(mu.clone(), nu.clone(), cost, e1 + e2))?;
        let rhs = robust(RobustProblem::symmetric(mu, kappa.clone(), cost, e1))? + robust(RobustProblem::symmetric(kappa, nu, cost, e2))?;
        worst = worst.max(lhs - rhs);
    }
    Ok(SuiteResult { name: "triangle", instances: n, worst, tolerance: 1e-8 })
}

fn duality_gap(seed: u64) -> Result<SuiteResult> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let n = 20;
    for k in 0..n {
        let d = r.random_range(1..=3);
        let p = [1.0, 1.5, 2.0][k % 3];
        let eps = [0.0, 0.1, 0.25][(k / 3) % 3];
        let (a, b) = (r.random_range(2..16), r.random_range(2..16));
        let problem = RobustProblem::symmetric(random_measure(&mut r, a, d), random_measure(&mut r, b, d), GroundCost::euclidean(p)?, eps);
        let primal = solve_robust(&problem)?;
        let harvested = primal.potentials.as_ref().map_or(f64::INFINITY, |pot| pot.objective);
        worst = worst.max((primal.value_p - harvested).abs() / 1e-7);
        if k % 4 == 0 {
            let ascent = dual_ascent(&problem, &AscentConfig { seed: seed + k as u64, ..AscentConfig::default() })?;
            let tol = (1e-3 * (1.0 + primal.value_p)).max(1e-6);
            worst = worst.max((primal.value_p - ascent.objective).abs() / tol);
        }
    }
    // Reported relative to each check's own tolerance.
    Ok(SuiteResult { name: "duality-gap", instances: n, worst, tolerance: 1.0 })
}

fn elbow(seed: u64) -> Result<SuiteResult> {
    let fx = far_outlier_fixture(seed, 12, 2, 0.2)?;
    let grid = radius_grid(0.0, 0.4, 0.02)?;
    let curve = sweep_radius(&fx.mu_tilde, &fx.nu_tilde, GroundCost::euclidean(1.0)?, &grid)?;
    let report = detect_elbow(&curve, None)?;
    Ok(SuiteResult { name: "elbow", instances: 1, worst: (report.eps_hat - fx.eps).abs(), tolerance: 0.02 + 1e-12 })
}

fn exact_recovery(seed: u64) -> Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    let n = 20;
    for k in 0..n {
        let p = [1.0, 2.0][k % 2];
        let eps = [0.05, 0.1, 0.2, 0.3][k % 4];
        let fx = far_outlier_fixture(seed.wrapping_add(k as u64), 8, 1 + k % 3, eps)?;
        let cost = GroundCost::euclidean(p)?;
        let value = robust(RobustProblem::symmetric(fx.mu_tilde, fx.nu_tilde, cost, eps))?;
        let clean = solve_standard(&fx.mu, &fx.nu, &cost)?.value;
        worst = worst.max((value - (1.0 - eps).powf(1.0 / p) * clean).abs());
    }
    Ok(SuiteResult { name: "exact-recovery", instances: n, worst, tolerance: 1e-8 })
}

fn breakdown(seed: u64) -> Result<SuiteResult> {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let n = 20;
    for k in 0..n {
        let d = r.random_range(1..=3);
        let p = [1.0, 2.0][k % 2];
        let eps = r.random_range(0.01..0.33);
        let cost = GroundCost::euclidean(p)?;
        let (a, b) = (r.random_range(2..12), r.random_range(2..12));
        let mu = random_measure(&mut r, a, d);
        let nu = random_measure(&mut r, b, d);
        let (mt, nt) = breakdown_construction(&mu, &nu, cost, eps)?;
        let lhs = robust(RobustProblem::symmetric(mt, nt, cost, eps))?;
        let rhs = robust(RobustProblem::symmetric(mu, nu, cost, 3.0 * eps))?;
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(SuiteResult { name: "breakdown", instances: n, worst, tolerance: 1e-8 })
}
