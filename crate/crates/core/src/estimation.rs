//! Statistical procedures built on W_p^ε.
//!
//! Minimum-distance estimation over enumerable families, robust distance
//! estimation with an error certificate, radius sweeps with elbow detection,
//! robust two-sample and independence tests, and resilience bounds for
//! measures with bounded q-th moments.
//!
//! Independent solves (family members, sweep radii) run as rayon maps that
//! collect by index, so results do not depend on the thread count.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_radius, Error, Result};
use crate::exact::{one_sided, solve_robust, RobustProblem};
use crate::measures::{DiscreteMeasure, GroundCost, Metric};

/// Mean-resilience constant used by [`ResilienceProfile`]. The underlying
/// bound is only known up to a universal constant; 4 is a conservative
/// explicit choice valid for ε ≤ 1/2 and should be read as heuristic.
pub const RESILIENCE_CONSTANT: f64 = 4.0;

/// Default cap on the number of atoms of the product of marginals.
pub const PRODUCT_CAP: usize = 40_000;

/// A finite (or finitely discretized) family of candidate measures.
#[derive(Clone, Debug)]
pub enum CandidateFamily {
    List(Vec<DiscreteMeasure>),
    /// `template` translated by each θ.
    Location { template: DiscreteMeasure, thetas: Vec<Vec<f64>> },
    /// N(m, σ² I) discretized as a fixed standard-normal sample of size
    /// `samples` (drawn once from `seed`), scaled and shifted.
    Gaussian { sigmas: Vec<f64>, means: Vec<Vec<f64>>, samples: usize, seed: u64 },
}

impl CandidateFamily {
    pub fn len(&self) -> usize {
        match self {
            Self::List(v) => v.len(),
            Self::Location { thetas, .. } => thetas.len(),
            Self::Gaussian { sigmas, means, .. } => sigmas.len() * means.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Parameters identifying member `i`: its index for lists, θ for
    /// location families, `[σ, m...]` for Gaussians (σ-major order).
    pub fn params(&self, i: usize) -> Vec<f64> {
        match self {
            Self::List(_) => vec![i as f64],
            Self::Location { thetas, .. } => thetas[i].clone(),
            Self::Gaussian { sigmas, means, .. } => {
                let mut v = vec![sigmas[i / means.len()]];
                v.extend(&means[i % means.len()]);
                v
            }
        }
    }

    /// All members, in enumeration order.
    pub fn members(&self) -> Result<Vec<DiscreteMeasure>> {
        if self.is_empty() {
            return Err(Error::EmptyFamily);
        }
        let members = match self {
            Self::List(v) => v.clone(),
            Self::Location { template, thetas } => thetas
                .iter()
                .map(|t| translate(template, t))
                .collect::<Result<_>>()?,
            Self::Gaussian { sigmas, means, samples, seed } => {
                let d = means[0].len();
                if *samples == 0 || d == 0 || means.iter().any(|m| m.len() != d) {
                    return Err(Error::InvalidDimensions("gaussian family means must share a positive dimension".into()));
                }
                if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
                    return Err(Error::InvalidInput(format!("invalid sigma {s}")));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let z: Vec<f64> = (0..samples * d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let w = vec![1.0 / *samples as f64; *samples];
                let mut out = Vec::with_capacity(self.len());
                for &s in sigmas {
                    for m in means {
                        let coords = z.chunks_exact(d).flat_map(|zi| zi.iter().zip(m).map(move |(a, b)| s * a + b)).collect();
                        out.push(DiscreteMeasure::from_flat(d, coords, w.clone())?);
                    }
                }
                out
            }
        };
        for m in &members {
            m.require_probability()?;
        }
        Ok(members)
    }
}

fn translate(template: &DiscreteMeasure, theta: &[f64]) -> Result<DiscreteMeasure> {
    if theta.len() != template.dim() {
        return Err(Error::InvalidDimensions(format!(
            "shift of dimension {} for template of dimension {}",
            theta.len(),
            template.dim()
        )));
    }
    Ok(template.pushforward(template.dim(), |x, out| {
        for ((o, a), b) in out.iter_mut().zip(x).zip(theta) {
            *o = a + b;
        }
    }))
}

#[derive(Clone, Debug)]
pub struct MdeResult {
    pub index: usize,
    pub member: DiscreteMeasure,
    pub params: Vec<f64>,
    /// W_p^ε between the chosen member and the data.
    pub value: f64,
    /// Distances of all members, in enumeration order.
    pub values: Vec<f64>,
}

/// Minimum-distance estimate: the lowest-index member whose distance to
/// `mu_tilde` is within `delta` of the family minimum. With `one_sided` the
/// one-sided distance from the contaminated `mu_tilde` to the member is used.
pub fn mde(
    mu_tilde: &DiscreteMeasure,
    family: &CandidateFamily,
    cost: GroundCost,
    eps: f64,
    delta: f64,
    one_sided_mode: bool,
) -> Result<MdeResult> {
    check_radius(eps)?;
    if !(delta.is_finite() && delta >= 0.0) {
        return Err(Error::InvalidInput(format!("delta must be nonnegative, got {delta}")));
    }
    mu_tilde.require_probability()?;
    let members = family.members()?;
    let values: Vec<f64> = members
        .par_iter()
        .map(|nu| {
            if one_sided_mode {
                one_sided(mu_tilde, nu, &cost, eps).map(|s| s.value)
            } else {
                solve_robust(&RobustProblem::symmetric(nu.clone(), mu_tilde.clone(), cost, eps)).map(|s| s.value)
            }
        })
        .collect::<Result<_>>()?;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let index = values.iter().position(|&v| v <= min + delta).expect("nonempty family");
    Ok(MdeResult {
        index,
        params: family.params(index),
        value: values[index],
        member: members.into_iter().nth(index).expect("index in range"),
        values,
    })
}

/// ρ(ε) = 2 (C σ^p ε^(1 − p/q))^(1/p) + 2 ε^(1/p) σ for measures with
/// centered q-th moments bounded by σ^q.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ResilienceProfile {
    pub sigma: f64,
    pub q: f64,
    pub p: f64,
}

impl ResilienceProfile {
    pub fn new(sigma: f64, q: f64, p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidInput(format!("p must be >= 1, got {p}")));
        }
        if q.is_nan() || q <= p {
            return Err(Error::InvalidMomentOrder { p, q });
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::InvalidInput(format!("sigma must be nonnegative, got {sigma}")));
        }
        Ok(Self { sigma, q, p })
    }

    pub fn rho(&self, eps: f64) -> Result<f64> {
        if !(0.0..=0.99).contains(&eps) {
            return Err(Error::InvalidRadius(eps));
        }
        let Self { sigma, q, p } = *self;
        let mean_part = RESILIENCE_CONSTANT * sigma.powf(p) * eps.powf(1.0 - p / q);
        Ok(2.0 * mean_part.powf(1.0 / p) + 2.0 * eps.powf(1.0 / p) * sigma)
    }
}

pub fn resilience_bound(sigma: f64, q: f64, p: f64, eps: f64) -> Result<f64> {
    ResilienceProfile::new(sigma, q, p)?.rho(eps)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Bounds {
    pub additive: f64,
    pub multiplicative: f64,
}

/// Serialized output of the certificate and the tests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub statistic: f64,
    pub threshold: Option<f64>,
    pub decision: Option<Decision>,
    pub bounds: Option<Bounds>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Reject,
    Accept,
}

/// Warning attached to every distance certificate.
pub const SAMPLING_TERMS_WARNING: &str =
    "sampling terms Wp(mu, mu_hat_n) + Wp(nu, nu_hat_n) are not computable from data and are not included";

/// Robust estimate of Wp(μ, ν) from ε-corrupted samples with the bound
/// `|estimate − Wp(μ, ν)| ≤ additive + multiplicative·Wp(μ, ν) + sampling terms`.
pub fn robust_distance_certificate(
    mu_tilde: &DiscreteMeasure,
    nu_tilde: &DiscreteMeasure,
    cost: GroundCost,
    eps: f64,
    profile: &ResilienceProfile,
) -> Result<Certificate> {
    check_radius(eps)?;
    if eps >= 1.0 / 3.0 {
        return Err(Error::BeyondBreakdown(eps));
    }
    let estimate = solve_robust(&RobustProblem::symmetric(mu_tilde.clone(), nu_tilde.clone(), cost, eps))?.value;
    let bounds = Bounds {
        additive: 2.0 * profile.rho(3.0 * eps)?,
        multiplicative: multiplicative_bound(eps, cost.p),
    };
    Ok(Certificate {
        statistic: estimate,
        threshold: None,
        decision: None,
        bounds: Some(bounds),
        warnings: vec![SAMPLING_TERMS_WARNING.into()],
    })
}

/// τ = 1 − (1 − 3ε)^(1/p).
pub fn multiplicative_bound(eps: f64, p: f64) -> f64 {
    1.0 - (1.0 - 3.0 * eps).powf(1.0 / p)
}

/// Contaminations μ̃, ν̃ within TV ε of μ, ν with W^ε(μ̃, ν̃) = W^{3ε}(μ, ν):
/// with α, β the masses removed by an optimal W^{3ε}(μ, ν) solution,
/// μ̃ = μ − α/3 + β/3 and ν̃ = ν − β/3 + α/3.
pub fn breakdown_construction(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: GroundCost,
    eps: f64,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    check_radius(3.0 * eps)?;
    let sol = solve_robust(&RobustProblem::symmetric(mu.clone(), nu.clone(), cost, 3.0 * eps))?;
    let (alpha, beta) = (&sol.removed_mu, &sol.removed_nu);
    let third = 1.0 / 3.0;
    Ok((
        combine(&[(mu, 1.0), (alpha, -third), (beta, third)]),
        combine(&[(nu, 1.0), (beta, -third), (alpha, third)]),
    ))
}

/// Σ c_k m_k, with round-off negatives clipped to zero.
fn combine(terms: &[(&DiscreteMeasure, f64)]) -> DiscreteMeasure {
    let dim = terms[0].0.dim();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (m, c) in terms {
        coords.extend_from_slice(m.coords());
        weights.extend(m.weights().iter().map(|w| c * w));
    }
    let merged = DiscreteMeasure::merged(dim, &coords, &weights);
    let clipped: Vec<f64> = merged.weights().iter().map(|&w| if w < 1e-15 { 0.0 } else { w }).collect();
    DiscreteMeasure::merged(dim, merged.coords(), &clipped)
}

/// `values_p[i] = W_p^{taus[i]}(μ̃, ν̃)^p` and forward slopes.
#[derive(Clone, Debug, Serialize)]
pub struct SweepCurve {
    pub taus: Vec<f64>,
    pub values_p: Vec<f64>,
    /// `slopes[i] = (values_p[i+1] − values_p[i]) / (taus[i+1] − taus[i])`.
    pub slopes: Vec<f64>,
}

/// One exact solve per radius; fails if the curve is not non-increasing.
pub fn sweep_radius(
    mu_tilde: &DiscreteMeasure,
    nu_tilde: &DiscreteMeasure,
    cost: GroundCost,
    taus: &[f64],
) -> Result<SweepCurve> {
    if taus.is_empty() {
        return Err(Error::InvalidInput("empty radius grid".into()));
    }
    for &t in taus {
        check_radius(t)?;
    }
    if taus.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("radius grid must be strictly increasing".into()));
    }
    let values_p: Vec<f64> = taus
        .par_iter()
        .map(|&tau| {
            solve_robust(&RobustProblem::symmetric(mu_tilde.clone(), nu_tilde.clone(), cost, tau))
                .map(|s| s.value_p)
                .map_err(|e| Error::AtRadius { tau, source: Box::new(e) })
        })
        .collect::<Result<_>>()?;
    for (i, w) in values_p.windows(2).enumerate() {
        if w[1] > w[0] + 1e-9 * (1.0 + w[0].abs()) {
            return Err(Error::AtRadius {
                tau: taus[i + 1],
                source: Box::new(Error::NumericalFailure(format!("sweep increased from {} to {}", w[0], w[1]))),
            });
        }
    }
    let slopes = (0..taus.len() - 1)
        .map(|i| (values_p[i + 1] - values_p[i]) / (taus[i + 1] - taus[i]))
        .collect();
    Ok(SweepCurve { taus: taus.to_vec(), values_p, slopes })
}

/// Radius grid `start, start + step, ...` up to `end` inclusive (within a
/// tenth of a step), built by multiplication so values do not drift, and
/// snapped to 12 decimals so that 3 × 0.1 prints as 0.3.
pub fn radius_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && end.is_finite() && step.is_finite() && step > 0.0 && end >= start) {
        return Err(Error::InvalidInput(format!("invalid grid {start}:{end}:{step}")));
    }
    let n = ((end - start) / step + 0.1).floor() as usize;
    Ok((0..=n).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct ElbowReport {
    pub eps_hat: f64,
    /// Grid point of largest second difference of `values_p`.
    pub curvature_tau: f64,
    /// First grid point whose forward slope is at least the threshold.
    pub threshold_tau: Option<f64>,
    pub second_differences: Vec<f64>,
}

/// Locates the elbow of a sweep curve. With a threshold the first τ whose
/// forward slope is ≥ threshold wins; otherwise the interior point of
/// maximal second difference (ties go to the smaller τ).
pub fn detect_elbow(curve: &SweepCurve, threshold: Option<f64>) -> Result<ElbowReport> {
    let n = curve.taus.len();
    if n < 4 {
        return Err(Error::InvalidInput(format!("elbow detection needs at least 4 grid points, got {n}")));
    }
    if curve.slopes.iter().all(|s| s.abs() <= 1e-12) {
        return Err(Error::NoElbow);
    }
    let v = &curve.values_p;
    let second: Vec<f64> = (1..n - 1).map(|i| v[i + 1] - 2.0 * v[i] + v[i - 1]).collect();
    let mut best = 0;
    for (i, s) in second.iter().enumerate() {
        if *s > second[best] {
            best = i;
        }
    }
    let curvature_tau = curve.taus[best + 1];
    let threshold_tau = threshold.and_then(|t| {
        let tol = 1e-9 * (1.0 + t.abs());
        curve.slopes.iter().position(|&s| s >= t - tol).map(|i| curve.taus[i])
    });
    Ok(ElbowReport {
        eps_hat: threshold_tau.unwrap_or(curvature_tau),
        curvature_tau,
        threshold_tau,
        second_differences: second,
    })
}

/// Warning emitted by the tests when ε is outside their guarantee.
pub const GUARANTEE_VOID: &str = "guarantee_void: the test guarantee requires eps <= 1/4";

fn threshold_decision(statistic: f64, eps: f64, rho: f64) -> Result<Certificate> {
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidInput(format!("rho must be nonnegative, got {rho}")));
    }
    let threshold = 3.0 * rho;
    let mut warnings = Vec::new();
    if eps > 0.25 {
        warnings.push(GUARANTEE_VOID.into());
    }
    Ok(Certificate {
        statistic,
        threshold: Some(threshold),
        decision: Some(if statistic > threshold { Decision::Reject } else { Decision::Accept }),
        bounds: None,
        warnings,
    })
}

/// Rejects μ = ν iff W_p^ε(μ̃, ν̃) > 3ρ.
pub fn two_sample_test(
    mu_tilde: &DiscreteMeasure,
    nu_tilde: &DiscreteMeasure,
    cost: GroundCost,
    eps: f64,
    rho: f64,
) -> Result<Certificate> {
    let stat = solve_robust(&RobustProblem::symmetric(mu_tilde.clone(), nu_tilde.clone(), cost, eps))?.value;
    threshold_decision(stat, eps, rho)
}

#[derive(Clone, Debug)]
pub struct IndependenceConfig {
    /// Maximum number of atoms of the product of marginals.
    pub cap: usize,
    /// When set, an oversized product is replaced by `cap` i.i.d. draws
    /// from it using this seed; otherwise it is an error.
    pub subsample_seed: Option<u64>,
}

impl Default for IndependenceConfig {
    fn default() -> Self {
        Self { cap: PRODUCT_CAP, subsample_seed: None }
    }
}

/// The joint empirical measure of `pairs` and the product of its marginals,
/// as measures on the concatenated space.
pub fn joint_and_product(
    pairs: &[(Vec<f64>, Vec<f64>)],
    config: &IndependenceConfig,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if pairs.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (dx, dy) = (pairs[0].0.len(), pairs[0].1.len());
    if dx == 0 || dy == 0 || pairs.iter().any(|(x, y)| x.len() != dx || y.len() != dy) {
        return Err(Error::InvalidDimensions("pairs must have consistent positive dimensions".into()));
    }
    let w = vec![1.0 / pairs.len() as f64; pairs.len()];
    let joint_coords: Vec<f64> = pairs.iter().flat_map(|(x, y)| x.iter().chain(y).copied()).collect();
    let joint = DiscreteMeasure::from_flat(dx + dy, joint_coords, w.clone())?;
    let kx = DiscreteMeasure::from_flat(dx, pairs.iter().flat_map(|p| p.0.clone()).collect(), w.clone())?;
    let ky = DiscreteMeasure::from_flat(dy, pairs.iter().flat_map(|p| p.1.clone()).collect(), w)?;
    let atoms = kx.len() * ky.len();
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    if atoms <= config.cap {
        for (x, wx) in kx.points().zip(kx.weights()) {
            for (y, wy) in ky.points().zip(ky.weights()) {
                coords.extend_from_slice(x);
                coords.extend_from_slice(y);
                weights.push(wx * wy);
            }
        }
    } else {
        let Some(seed) = config.subsample_seed else {
            return Err(Error::TooLarge { atoms, cap: config.cap });
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ix = WeightedIndex::new(kx.weights()).map_err(|e| Error::NumericalFailure(e.to_string()))?;
        let iy = WeightedIndex::new(ky.weights()).map_err(|e| Error::NumericalFailure(e.to_string()))?;
        for _ in 0..config.cap {
            coords.extend_from_slice(kx.point(ix.sample(&mut rng)));
            coords.extend_from_slice(ky.point(iy.sample(&mut rng)));
            weights.push(1.0 / config.cap as f64);
        }
    }
    let product = DiscreteMeasure::from_flat(dx + dy, coords, weights)?;
    Ok((joint, product))
}

/// Rejects independence iff W_p^ε(κ̃_n, κ̃_{1,n} ⊗ κ̃_{2,n}) > 3ρ, under the
/// product metric max(d(x, x′), d(y, y′)).
pub fn independence_test(
    pairs: &[(Vec<f64>, Vec<f64>)],
    p: f64,
    eps: f64,
    rho: f64,
    config: &IndependenceConfig,
) -> Result<Certificate> {
    let (joint, product) = joint_and_product(pairs, config)?;
    let cost = GroundCost::new(Metric::ProductMax { split: pairs[0].0.len() }, p)?;
    let stat = solve_robust(&RobustProblem::symmetric(joint, product, cost, eps))?.value;
    threshold_decision(stat, eps, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::solve_standard;
    use crate::measures::{sample_family, FamilyParams};
    use crate::testutil::{line, random_measure, rng};

    fn cost(p: f64) -> GroundCost {
        GroundCost::euclidean(p).unwrap()
    }

    #[test]
    fn mde_drops_far_outlier() {
        let mu = line(&[2.0, 50.0], &[0.8, 0.2]);
        let family = CandidateFamily::List((0..6).map(|t| DiscreteMeasure::dirac(vec![t as f64]).unwrap()).collect());
        let r = mde(&mu, &family, cost(1.0), 0.2, 0.0, false).unwrap();
        assert_eq!(r.index, 2);
        assert!(r.value.abs() < 1e-12);
        // Brute force over the six candidates.
        for (t, v) in r.values.iter().enumerate() {
            let expect = 0.8 * (t as f64 - 2.0).abs();
            assert!((v - expect).abs() < 1e-9, "{t}: {v}");
        }
        let one = mde(&mu, &family, cost(1.0), 0.2, 0.0, true).unwrap();
        assert_eq!(one.index, 2);
    }

    #[test]
    fn mde_member_of_family_and_delta() {
        let mut r = rng(1);
        let a = random_measure(&mut r, 5, 2);
        let b = random_measure(&mut r, 5, 2);
        let family = CandidateFamily::List(vec![b.clone(), a.clone()]);
        let res = mde(&a, &family, cost(2.0), 0.1, 0.0, false).unwrap();
        assert_eq!(res.index, 1);
        assert!(res.value.abs() < 1e-9);
        let loose = mde(&a, &family, cost(2.0), 0.1, 1e9, false).unwrap();
        assert_eq!(loose.index, 0);
        assert!(matches!(mde(&a, &CandidateFamily::List(vec![]), cost(2.0), 0.1, 0.0, false), Err(Error::EmptyFamily)));
    }

    #[test]
    fn gaussian_family_is_enumerated_sigma_major() {
        let fam = CandidateFamily::Gaussian { sigmas: vec![1.0, 2.0], means: vec![vec![0.0], vec![3.0]], samples: 50, seed: 4 };
        let m = fam.members().unwrap();
        assert_eq!(m.len(), 4);
        assert_eq!(fam.params(3), vec![2.0, 3.0]);
        assert!((m[3].mean()[0] - (3.0 + 2.0 * (m[0].mean()[0]))).abs() < 1e-9);
    }

    #[test]
    fn resilience_profile() {
        assert_eq!(resilience_bound(1.0, 4.0, 2.0, 0.0).unwrap(), 0.0);
        let prof = ResilienceProfile::new(1.5, 3.0, 1.0).unwrap();
        let mut last = 0.0;
        for i in 0..=99 {
            let r = prof.rho(i as f64 / 100.0).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert!(matches!(ResilienceProfile::new(1.0, 2.0, 2.0), Err(Error::InvalidMomentOrder { .. })));
        assert!(prof.rho(0.995).is_err());
    }

    #[test]
    fn greedy_deletion_within_resilience() {
        // Deleting the ε-mass farthest from the center changes Wp by at most ρ(ε).
        let (p, q) = (1.0, 3.0);
        let mut params = FamilyParams::new(1.0, 2);
        params.q = Some(q);
        let mu = sample_family("bounded-qth-moment", &params, 200, 3).unwrap().measure;
        let center = mu.mean();
        let sigma = mu
            .points()
            .zip(mu.weights())
            .map(|(x, w)| w * cost(1.0).distance(x, &center).powf(q))
            .sum::<f64>()
            .powf(1.0 / q);
        let prof = ResilienceProfile::new(sigma, q, p).unwrap();
        for eps in [0.05, 0.1, 0.2] {
            let mut order: Vec<usize> = (0..mu.len()).collect();
            order.sort_by(|&a, &b| {
                let da = cost(1.0).distance(mu.point(a), &center);
                let db = cost(1.0).distance(mu.point(b), &center);
                db.total_cmp(&da)
            });
            let mut w = mu.weights().to_vec();
            let mut left = eps;
            for i in order {
                let take = w[i].min(left);
                w[i] -= take;
                left -= take;
                if left <= 0.0 {
                    break;
                }
            }
            let trimmed = DiscreteMeasure::merged(mu.dim(), mu.coords(), &w).normalized();
            let change = solve_standard(&mu, &trimmed, &cost(p)).unwrap().value;
            assert!(change <= prof.rho(eps).unwrap(), "eps {eps}: {change}");
        }
    }

    #[test]
    fn certificate_basics() {
        let mut r = rng(2);
        let mu = random_measure(&mut r, 8, 2);
        let prof = ResilienceProfile::new(1.0, 4.0, 1.0).unwrap();
        let c = robust_distance_certificate(&mu, &mu, cost(1.0), 0.0, &prof).unwrap();
        assert!(c.statistic.abs() < 1e-12);
        assert_eq!(c.bounds, Some(Bounds { additive: 0.0, multiplicative: 0.0 }));
        assert!((multiplicative_bound(0.1, 1.0) - 0.3).abs() < 1e-15);
        assert!(matches!(
            robust_distance_certificate(&mu, &mu, cost(1.0), 1.0 / 3.0, &prof),
            Err(Error::BeyondBreakdown(_))
        ));
        let json = serde_json::to_value(&c).unwrap();
        for key in ["statistic", "threshold", "decision", "bounds", "warnings"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn breakdown_matches_triple_radius() {
        let mut r = rng(3);
        for _ in 0..5 {
            let mu = random_measure(&mut r, 7, 2);
            let nu = random_measure(&mut r, 6, 2);
            let eps = 0.1;
            let (mt, nt) = breakdown_construction(&mu, &nu, cost(2.0), eps).unwrap();
            assert!(crate::measures::tv_distance(&mu, &mt).unwrap() <= eps + 1e-12);
            assert!(crate::measures::tv_distance(&nu, &nt).unwrap() <= eps + 1e-12);
            let lhs = solve_robust(&RobustProblem::symmetric(mt, nt, cost(2.0), eps)).unwrap().value;
            let rhs = solve_robust(&RobustProblem::symmetric(mu, nu, cost(2.0), 3.0 * eps)).unwrap().value;
            assert!((lhs - rhs).abs() <= 1e-8, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn sweep_endpoints_and_monotone() {
        let mut r = rng(4);
        let mu = random_measure(&mut r, 6, 1);
        let nu = random_measure(&mut r, 6, 1);
        let tv = crate::measures::tv_distance(&mu, &nu).unwrap();
        let mut grid = radius_grid(0.0, 0.9, 0.1).unwrap();
        assert_eq!(grid.len(), 10);
        assert_eq!(grid[3], 0.3);
        grid.push(0.95);
        let curve = sweep_radius(&mu, &nu, cost(2.0), &grid).unwrap();
        let w = solve_standard(&mu, &nu, &cost(2.0)).unwrap().value_p;
        assert!((curve.values_p[0] - w).abs() < 1e-12);
        assert!(curve.slopes.iter().all(|&s| s <= 1e-9));
        for (t, v) in curve.taus.iter().zip(&curve.values_p) {
            if *t >= tv {
                assert!(v.abs() < 1e-12);
            }
        }
        assert!(sweep_radius(&mu, &nu, cost(2.0), &[0.2, 0.1]).is_err());
    }

    #[test]
    fn elbow_rules() {
        // Piecewise linear curve with a kink at 0.2.
        let taus = radius_grid(0.0, 0.5, 0.05).unwrap();
        let values_p: Vec<f64> = taus.iter().map(|&t| if t <= 0.2 { 10.0 - 40.0 * t } else { 2.0 - 1.0 * (t - 0.2) }).collect();
        let slopes = (0..taus.len() - 1).map(|i| (values_p[i + 1] - values_p[i]) / (taus[i + 1] - taus[i])).collect();
        let curve = SweepCurve { taus, values_p, slopes };
        let rep = detect_elbow(&curve, Some(-1.0)).unwrap();
        assert!((rep.curvature_tau - 0.2).abs() < 1e-12);
        assert!((rep.threshold_tau.unwrap() - 0.2).abs() < 1e-12);
        let flat = SweepCurve { taus: vec![0.0, 0.1, 0.2, 0.3], values_p: vec![0.0; 4], slopes: vec![0.0; 3] };
        assert!(matches!(detect_elbow(&flat, None), Err(Error::NoElbow)));
    }

    #[test]
    fn two_sample_decisions() {
        let mut r = rng(5);
        let mu = random_measure(&mut r, 10, 2);
        let acc = two_sample_test(&mu, &mu, cost(1.0), 0.1, 0.01).unwrap();
        assert_eq!(acc.decision, Some(Decision::Accept));
        assert!(acc.warnings.is_empty());
        let far = mu.pushforward(2, |x, o| {
            o[0] = x[0] + 100.0;
            o[1] = x[1];
        });
        let rej = two_sample_test(&mu, &far, cost(1.0), 0.3, 0.01).unwrap();
        assert_eq!(rej.decision, Some(Decision::Reject));
        assert_eq!(rej.warnings, vec![GUARANTEE_VOID.to_string()]);
    }

    #[test]
    fn independence_product_and_cap() {
        assert_eq!(
            GroundCost::new(Metric::ProductMax { split: 1 }, 1.0).unwrap().distance(&[0.0, 0.0], &[1.0, 2.0]),
            2.0
        );
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..6).map(|i| (vec![10.0 * i as f64], vec![10.0 * i as f64])).collect();
        let (joint, product) = joint_and_product(&pairs, &IndependenceConfig::default()).unwrap();
        assert_eq!(joint.len(), 6);
        assert_eq!(product.len(), 36);
        let dep = independence_test(&pairs, 1.0, 0.0, 0.1, &IndependenceConfig::default()).unwrap();
        assert_eq!(dep.decision, Some(Decision::Reject));
        let small = IndependenceConfig { cap: 10, subsample_seed: None };
        assert!(matches!(joint_and_product(&pairs, &small), Err(Error::TooLarge { atoms: 36, cap: 10 })));
        let sub = IndependenceConfig { cap: 10, subsample_seed: Some(1) };
        let (_, p1) = joint_and_product(&pairs, &sub).unwrap();
        let (_, p2) = joint_and_product(&pairs, &sub).unwrap();
        assert_eq!(p1, p2);
        assert!(p1.len() <= 10);
    }
}
