//! Discrete measures, ground costs, clean sampling families and contamination models.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_radius, Error, Result};

/// Tolerance on total mass used by the `probability` check and mass comparisons.
pub const MASS_TOL: f64 = 1e-9;

/// A finitely supported nonnegative measure on ℝ^d.
///
/// Points are stored row-major in a flat buffer. Identical points (exact
/// coordinate equality, `-0.0 == 0.0`) are merged at construction by summing
/// their weights, keeping the position of the first occurrence.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(xs: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub(crate) fn point_key(p: &[f64]) -> Vec<u64> {
    p.iter()
        .map(|&x| if x == 0.0 { 0.0f64.to_bits() } else { x.to_bits() })
        .collect()
}

impl DiscreteMeasure {
    /// Builds a measure from a list of points and nonnegative weights.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyInput);
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(Error::InvalidDimensions("points must have dimension >= 1".into()));
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidDimensions("points have inconsistent dimensions".into()));
        }
        let coords: Vec<f64> = points.into_iter().flatten().collect();
        Self::from_flat(dim, coords, weights)
    }

    /// Builds a measure from a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        if dim == 0 || coords.len() != dim * weights.len() {
            return Err(Error::InvalidDimensions(format!(
                "{} coordinates cannot form {} points of dimension {}",
                coords.len(),
                weights.len(),
                dim
            )));
        }
        if let Some(x) = coords.iter().find(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite coordinate {x}")));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidInput(format!("invalid weight {w}")));
        }
        let m = Self::merged(dim, &coords, &weights);
        if m.mass() <= 0.0 {
            return Err(Error::InvalidInput("total mass is zero".into()));
        }
        Ok(m)
    }

    /// The zero measure in dimension `dim` (empty support).
    pub fn zero(dim: usize) -> Self {
        Self { dim, coords: Vec::new(), weights: Vec::new() }
    }

    /// Merge without validation; weights that are exactly zero are dropped.
    pub(crate) fn merged(dim: usize, coords: &[f64], weights: &[f64]) -> Self {
        let mut index: HashMap<Vec<u64>, usize> = HashMap::with_capacity(weights.len());
        let mut out_c = Vec::with_capacity(coords.len());
        let mut out_w: Vec<f64> = Vec::with_capacity(weights.len());
        for (p, &w) in coords.chunks_exact(dim).zip(weights) {
            if w == 0.0 {
                continue;
            }
            match index.get(&point_key(p)) {
                Some(&k) => out_w[k] += w,
                None => {
                    index.insert(point_key(p), out_w.len());
                    out_c.extend(p.iter().map(|&x| if x == 0.0 { 0.0 } else { x }));
                    out_w.push(w);
                }
            }
        }
        Self { dim, coords: out_c, weights: out_w }
    }

    /// A Dirac mass of weight one at `x`.
    pub fn dirac(x: Vec<f64>) -> Result<Self> {
        Self::new(vec![x], vec![1.0])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of support points.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mass(&self) -> f64 {
        compensated_sum(&self.weights)
    }

    pub fn is_probability(&self) -> bool {
        (self.mass() - 1.0).abs() <= MASS_TOL
    }

    pub fn require_probability(&self) -> Result<()> {
        if self.is_probability() {
            Ok(())
        } else {
            Err(Error::NotProbability(self.mass()))
        }
    }

    /// Weight at `x`, zero if `x` is not an atom.
    pub fn weight_at(&self, x: &[f64]) -> f64 {
        let key = point_key(x);
        self.points()
            .zip(&self.weights)
            .find(|(p, _)| point_key(p) == key)
            .map_or(0.0, |(_, &w)| w)
    }

    /// The measure multiplied by `factor >= 0`.
    pub fn scaled(&self, factor: f64) -> Self {
        let weights = self.weights.iter().map(|w| w * factor).collect::<Vec<_>>();
        Self::merged(self.dim, &self.coords, &weights)
    }

    /// The measure rescaled to unit mass.
    pub fn normalized(&self) -> Self {
        self.scaled(1.0 / self.mass())
    }

    /// Sum of two measures on the same space.
    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.dim != other.dim {
            return Err(Error::InvalidDimensions(format!("{} vs {}", self.dim, other.dim)));
        }
        let mut coords = self.coords.clone();
        coords.extend_from_slice(&other.coords);
        let mut weights = self.weights.clone();
        weights.extend_from_slice(&other.weights);
        Ok(Self::merged(self.dim, &coords, &weights))
    }

    /// Pushforward under a map ℝ^d → ℝ^k; duplicates in the image are merged.
    pub fn pushforward(&self, k: usize, f: impl Fn(&[f64], &mut [f64])) -> Self {
        let mut coords = vec![0.0; k * self.len()];
        for (p, out) in self.points().zip(coords.chunks_exact_mut(k)) {
            f(p, out);
        }
        Self::merged(k, &coords, &self.weights)
    }

    /// Weighted mean of the support.
    pub fn mean(&self) -> Vec<f64> {
        let mass = self.mass();
        let mut m = vec![0.0; self.dim];
        for (p, w) in self.points().zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(p) {
                *acc += w * x;
            }
        }
        m.iter_mut().for_each(|x| *x /= mass);
        m
    }

    /// Shared mass μ ∧ ν (pointwise minimum of atom weights).
    pub fn meet(&self, other: &Self) -> Self {
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (p, &w) in self.points().zip(&self.weights) {
            let v = other.weight_at(p);
            if v > 0.0 {
                coords.extend_from_slice(p);
                weights.push(w.min(v));
            }
        }
        Self::merged(self.dim, &coords, &weights)
    }
}

/// Uniform empirical measure of a sample list.
pub fn empirical(samples: &[Vec<f64>]) -> Result<DiscreteMeasure> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let w = 1.0 / samples.len() as f64;
    DiscreteMeasure::new(samples.to_vec(), vec![w; samples.len()])
}

/// Total variation ‖μ − ν‖_tv = ½ Σ_x |μ(x) − ν(x)| between measures of equal mass.
pub fn tv_distance(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::InvalidDimensions(format!("{} vs {}", mu.dim(), nu.dim())));
    }
    let (ma, mb) = (mu.mass(), nu.mass());
    if (ma - mb).abs() > MASS_TOL {
        return Err(Error::MassMismatch { left: ma, right: mb });
    }
    let mut nu_w: HashMap<Vec<u64>, f64> =
        nu.points().map(point_key).zip(nu.weights().iter().copied()).collect();
    let mut total = 0.0;
    for (p, &w) in mu.points().zip(mu.weights()) {
        let v = nu_w.remove(&point_key(p)).unwrap_or(0.0);
        total += (w - v).abs();
    }
    total += nu_w.values().sum::<f64>();
    Ok(0.5 * total)
}

/// Distance on the ground space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Metric {
    /// ‖x − y‖₂.
    Euclidean,
    /// max(‖x₁ − y₁‖, ‖x₂ − y₂‖) where the first `split` coordinates form the first factor.
    ProductMax { split: usize },
}

/// Ground cost c(x, y) = d(x, y)^p.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundCost {
    pub metric: Metric,
    pub p: f64,
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

impl GroundCost {
    pub fn euclidean(p: f64) -> Result<Self> {
        Self::new(Metric::Euclidean, p)
    }

    pub fn new(metric: Metric, p: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 1.0) {
            return Err(Error::InvalidInput(format!("exponent p must be in [1, inf), got {p}")));
        }
        Ok(Self { metric, p })
    }

    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self.metric {
            Metric::Euclidean => sq_dist(x, y).sqrt(),
            Metric::ProductMax { split } => {
                let a = sq_dist(&x[..split], &y[..split]);
                let b = sq_dist(&x[split..], &y[split..]);
                a.max(b).sqrt()
            }
        }
    }

    pub fn cost(&self, x: &[f64], y: &[f64]) -> f64 {
        match (self.metric, self.p) {
            (Metric::Euclidean, 2.0) => sq_dist(x, y),
            (_, 1.0) => self.distance(x, y),
            (_, p) => self.distance(x, y).powf(p),
        }
    }

    /// Row-major cost matrix between the supports of `mu` (rows) and `nu` (columns).
    pub fn matrix(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
        let mut c = Vec::with_capacity(mu.len() * nu.len());
        for x in mu.points() {
            c.extend(nu.points().map(|y| self.cost(x, y)));
        }
        c
    }
}

/// How the adversary corrupts a clean measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContaminationModel {
    /// μ̃ = (1 − ε) μ̂ + ε α.
    Huber,
    /// Whole atoms of total weight at most ε are replaced by outlier draws.
    StrongReplacement,
}

/// Where outliers come from.
#[derive(Clone, Debug, PartialEq)]
pub enum OutlierSource {
    Measure(DiscreteMeasure),
    /// Uniform draws in the box `[lo, hi]`.
    UniformBox { lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContaminationSpec {
    pub model: ContaminationModel,
    pub eps: f64,
    pub outliers: OutlierSource,
    pub seed: u64,
}

impl OutlierSource {
    fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            OutlierSource::Measure(m) => {
                let mass = m.mass();
                let mut u = rng.random::<f64>() * mass;
                for (i, &w) in m.weights().iter().enumerate() {
                    if u < w {
                        return m.point(i).to_vec();
                    }
                    u -= w;
                }
                m.point(m.len() - 1).to_vec()
            }
            OutlierSource::UniformBox { lo, hi } => {
                lo.iter().zip(hi).map(|(a, b)| a + (b - a) * rng.random::<f64>()).collect()
            }
        }
    }

    fn dim(&self) -> usize {
        match self {
            OutlierSource::Measure(m) => m.dim(),
            OutlierSource::UniformBox { lo, .. } => lo.len(),
        }
    }
}

/// Corrupts a clean probability measure according to `spec`.
pub fn contaminate(mu_hat: &DiscreteMeasure, spec: &ContaminationSpec) -> Result<DiscreteMeasure> {
    check_radius(spec.eps)?;
    mu_hat.require_probability()?;
    if spec.outliers.dim() != mu_hat.dim() {
        return Err(Error::InvalidDimensions("outlier source dimension differs".into()));
    }
    if let OutlierSource::UniformBox { lo, hi } = &spec.outliers {
        if lo.iter().zip(hi).any(|(a, b)| !(a.is_finite() && b.is_finite() && a <= b)) {
            return Err(Error::InvalidInput("outlier box must satisfy lo <= hi".into()));
        }
    }
    if spec.eps == 0.0 {
        return Ok(mu_hat.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dim = mu_hat.dim();
    match spec.model {
        ContaminationModel::Huber => {
            let alpha = match &spec.outliers {
                OutlierSource::Measure(m) => m.normalized(),
                src => {
                    let draws: Vec<Vec<f64>> = (0..mu_hat.len()).map(|_| src.draw(&mut rng)).collect();
                    empirical(&draws)?
                }
            };
            mu_hat.scaled(1.0 - spec.eps).add(&alpha.scaled(spec.eps))
        }
        ContaminationModel::StrongReplacement => {
            let mean = mu_hat.mean();
            let mut order: Vec<(usize, f64)> =
                mu_hat.points().map(|p| sq_dist(p, &mean)).enumerate().collect();
            order.sort_by(|a, b| b.1.total_cmp(&a.1));
            let mut weights = mu_hat.weights().to_vec();
            let mut coords = mu_hat.coords().to_vec();
            let mut removed = 0.0;
            for (i, _) in order {
                let w = mu_hat.weights()[i];
                if removed + w > spec.eps + 1e-12 {
                    break;
                }
                removed += w;
                weights[i] = 0.0;
                coords.extend(spec.outliers.draw(&mut rng));
                weights.push(w);
            }
            Ok(DiscreteMeasure::merged(dim, &coords, &weights))
        }
    }
}

/// Parameters for [`sample_family`].
#[derive(Clone, Debug, PartialEq)]
pub struct FamilyParams {
    /// Scale σ > 0.
    pub sigma: f64,
    pub dim: usize,
    /// Moment order q (bounded-qth-moment and two-point-fixture).
    pub q: Option<f64>,
    /// Exponent p; when present, `q > p` is enforced.
    pub p: Option<f64>,
    /// Contamination level (two-point-fixture).
    pub eps: Option<f64>,
    /// Location of the distribution (defaults to the origin).
    pub center: Option<Vec<f64>>,
}

impl FamilyParams {
    pub fn new(sigma: f64, dim: usize) -> Self {
        Self { sigma, dim, q: None, p: None, eps: None, center: None }
    }
}

/// Output of [`sample_family`]. The two-point fixture yields a pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FamilySample {
    pub measure: DiscreteMeasure,
    pub companion: Option<DiscreteMeasure>,
}

/// Draws `n` i.i.d. points from a named clean family, or builds the deterministic
/// two-point lower-bound pair (δ_x, (1 − ε) δ_x + ε δ_y) with ‖x − y‖ = σ ε^{-1/q}.
pub fn sample_family(name: &str, params: &FamilyParams, n: usize, seed: u64) -> Result<FamilySample> {
    let FamilyParams { sigma, dim, .. } = *params;
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    if dim == 0 {
        return Err(Error::InvalidDimensions("dimension must be >= 1".into()));
    }
    let center = params.center.clone().unwrap_or_else(|| vec![0.0; dim]);
    if center.len() != dim {
        return Err(Error::InvalidDimensions("center dimension differs".into()));
    }
    let moment_order = || -> Result<f64> {
        let q = params.q.ok_or_else(|| Error::InvalidInput("missing moment order q".into()))?;
        let p = params.p.unwrap_or(1.0);
        if !(q.is_finite() && q > p) {
            return Err(Error::InvalidMomentOrder { p, q });
        }
        Ok(q)
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled = |draw: &mut dyn FnMut(&mut ChaCha8Rng) -> Vec<f64>| -> Result<FamilySample> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let samples: Vec<Vec<f64>> = (0..n).map(|_| draw(&mut rng)).collect();
        Ok(FamilySample { measure: empirical(&samples)?, companion: None })
    };
    match name {
        "gaussian" => sampled(&mut |rng| {
            center.iter().map(|c| c + sigma * rng.sample::<f64, _>(StandardNormal)).collect()
        }),
        "bounded-qth-moment" => {
            let q = moment_order()?;
            // Pareto radius with shape 2q has E[R^q] = 2 exactly.
            let radius = Pareto::new(1.0, 2.0 * q).map_err(|e| Error::InvalidInput(e.to_string()))?;
            let scale = sigma / 2f64.powf(1.0 / q);
            sampled(&mut |rng| {
                let r = radius.sample(rng);
                let dir = random_unit_vector(dim, rng);
                center.iter().zip(dir).map(|(c, u)| c + scale * r * u).collect()
            })
        }
        "two-point-fixture" => {
            let q = moment_order()?;
            let eps = params.eps.ok_or_else(|| Error::InvalidInput("missing eps".into()))?;
            if !(eps > 0.0 && eps < 1.0) {
                return Err(Error::InvalidRadius(eps));
            }
            let mut y = center.clone();
            y[0] += sigma * eps.powf(-1.0 / q);
            let mu = DiscreteMeasure::dirac(center.clone())?;
            let nu = DiscreteMeasure::new(vec![center, y], vec![1.0 - eps, eps])?;
            Ok(FamilySample { measure: mu, companion: Some(nu) })
        }
        other => Err(Error::UnknownFamily(other.to_string())),
    }
}

pub(crate) fn random_unit_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}
