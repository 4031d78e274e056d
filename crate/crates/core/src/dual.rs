//! Penalized Kantorovich dual of the robust distance.
//!
//! Potentials live on the joint support S = supp(μ) ∪ supp(ν), with the atoms
//! of μ first. The symmetric objective is
//!
//! ```text
//! Σ φ dμ + Σ φ^c dν − ε (max_S φ − min_S φ),   φ^c(y) = min_{s ∈ S} c(s, y) − φ(s).
//! ```
//!
//! Restricting φ to supp(μ) alone is not enough: with μ = δ₀, ν = δ₁ and
//! ε = 1/2 that objective reaches 1 while the primal value is 1/2.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_radius, Error, Result};
use crate::exact::{check_pair, RobustProblem, TransportSolution};
use crate::measures::{DiscreteMeasure, GroundCost};

/// The union of two supports, μ's atoms first.
#[derive(Clone, Debug, PartialEq)]
pub struct JointSupport {
    points: DiscreteMeasure,
    n_mu: usize,
    nu_index: Vec<usize>,
}

impl JointSupport {
    pub fn new(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Self {
        let ones = vec![1.0; mu.len()];
        let base = DiscreteMeasure::merged(mu.dim(), mu.coords(), &ones);
        let mut coords = mu.coords().to_vec();
        let mut nu_index = Vec::with_capacity(nu.len());
        let mut extra = 0;
        for y in nu.points() {
            match base.points().position(|x| x == y) {
                Some(k) => nu_index.push(k),
                None => {
                    nu_index.push(mu.len() + extra);
                    coords.extend_from_slice(y);
                    extra += 1;
                }
            }
        }
        let ones = vec![1.0; mu.len() + extra];
        let points = DiscreteMeasure::merged(mu.dim(), &coords, &ones);
        Self { points, n_mu: mu.len(), nu_index }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, s: usize) -> &[f64] {
        self.points.point(s)
    }

    /// Number of leading entries that are atoms of μ.
    pub fn n_mu(&self) -> usize {
        self.n_mu
    }

    /// Position of each atom of ν in S.
    pub fn nu_index(&self) -> &[usize] {
        &self.nu_index
    }

    /// Index of `x` in S, if present.
    pub fn find(&self, x: &[f64]) -> Option<usize> {
        self.points.points().position(|p| p == x)
    }

    /// The support as a measure with unit weights.
    pub fn as_measure(&self) -> &DiscreteMeasure {
        &self.points
    }
}

/// Which dual objective a potential belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DualForm {
    /// Σφμ + Σφ^cν − ε(max φ − min φ).
    Symmetric,
    /// Σφμ + (1−ε)Σφ^cν − ε max φ.
    OneSided,
}

/// A dual potential on the joint support together with its objective value.
#[derive(Clone, Debug)]
pub struct DualPotential {
    pub support: JointSupport,
    /// φ on S.
    pub phi: Vec<f64>,
    /// φ^c on supp(ν).
    pub phi_c: Vec<f64>,
    pub eps: f64,
    pub form: DualForm,
    pub objective: f64,
}

impl DualPotential {
    /// φ restricted to supp(μ).
    pub fn phi_mu(&self) -> &[f64] {
        &self.phi[..self.support.n_mu()]
    }

    /// φ shifted so that max φ = −min φ; the range penalty becomes 2ε‖φ‖∞.
    pub fn centered(&self) -> Vec<f64> {
        let (lo, hi) = range(&self.phi);
        let mid = 0.5 * (lo + hi);
        self.phi.iter().map(|x| x - mid).collect()
    }
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// φ^c(y) = min_x c(x, y) − φ(x) for every atom y of `to`, with x ranging over `from`.
pub fn c_transform(phi: &[f64], from: &DiscreteMeasure, to: &DiscreteMeasure, cost: &GroundCost) -> Vec<f64> {
    assert_eq!(phi.len(), from.len(), "one potential value per source atom");
    to.points()
        .map(|y| {
            from.points()
                .zip(phi)
                .map(|(x, f)| cost.cost(x, y) - f)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn transform_matrix(phi: &[f64], c: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![f64::INFINITY; m];
    for (row, f) in c.chunks_exact(m).zip(phi) {
        for (o, &cij) in out.iter_mut().zip(row) {
            let v = cij - f;
            if v < *o {
                *o = v;
            }
        }
    }
    out
}

fn check_phi(phi: &[f64], support: &JointSupport) -> Result<()> {
    if phi.len() != support.len() {
        return Err(Error::InvalidDimensions(format!(
            "potential has {} entries, joint support has {}",
            phi.len(),
            support.len()
        )));
    }
    if phi.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("potential must be finite".into()));
    }
    Ok(())
}

fn mu_term(phi: &[f64], mu: &DiscreteMeasure) -> f64 {
    phi.iter().zip(mu.weights()).map(|(f, w)| f * w).sum()
}

fn nu_term(phi_c: &[f64], nu: &DiscreteMeasure) -> f64 {
    phi_c.iter().zip(nu.weights()).map(|(f, w)| f * w).sum()
}

/// Symmetric objective for φ given on the joint support of `problem`.
pub fn dual_objective(phi: &[f64], problem: &RobustProblem) -> Result<f64> {
    check_radius(problem.eps_mu)?;
    check_pair(&problem.mu, &problem.nu)?;
    let support = JointSupport::new(&problem.mu, &problem.nu);
    check_phi(phi, &support)?;
    let phi_c = c_transform(phi, support.as_measure(), &problem.nu, &problem.cost);
    Ok(symmetric_value(phi, &phi_c, &problem.mu, &problem.nu, problem.eps()))
}

fn symmetric_value(phi: &[f64], phi_c: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure, eps: f64) -> f64 {
    let (lo, hi) = range(phi);
    mu_term(phi, mu) + nu_term(phi_c, nu) - eps * (hi - lo)
}

fn one_sided_value(phi: &[f64], phi_c: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure, eps: f64) -> f64 {
    let (_, hi) = range(phi);
    mu_term(phi, mu) + (1.0 - eps) * nu_term(phi_c, nu) - eps * hi
}

/// One-sided objective Σφμ̃ + (1−ε)Σφ^cν − ε max φ, φ on the joint support.
pub fn one_sided_dual_objective(
    phi: &[f64],
    mu_tilde: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
    eps: f64,
) -> Result<f64> {
    check_radius(eps)?;
    check_pair(mu_tilde, nu)?;
    let support = JointSupport::new(mu_tilde, nu);
    check_phi(phi, &support)?;
    let phi_c = c_transform(phi, support.as_measure(), nu, cost);
    Ok(one_sided_value(phi, &phi_c, mu_tilde, nu, eps))
}

fn uniform_count(m: &DiscreteMeasure) -> Option<usize> {
    let w0 = m.weights()[0];
    m.weights().iter().all(|w| (w - w0).abs() <= 1e-12).then_some(m.len())
}

fn trimmed_sum(mut vals: Vec<f64>, drop: usize, n: usize) -> f64 {
    vals.sort_by(|a, b| a.total_cmp(b));
    vals[..vals.len() - drop].iter().sum::<f64>() / n as f64
}

/// Loss-trimming objective for uniform measures: the mean of φ over μ's atoms
/// after dropping the εn largest values, plus the same for φ^c over ν's atoms.
pub fn loss_trimming_objective(
    phi: &[f64],
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
    eps: f64,
) -> Result<f64> {
    check_radius(eps)?;
    check_pair(mu, nu)?;
    let support = JointSupport::new(mu, nu);
    check_phi(phi, &support)?;
    let mut drops = [0usize; 2];
    for (k, m) in [mu, nu].into_iter().enumerate() {
        let n = uniform_count(m).ok_or_else(|| Error::Unsupported("loss trimming needs uniform weights".into()))?;
        let en = eps * n as f64;
        if (en - en.round()).abs() > 1e-9 {
            return Err(Error::Unsupported(format!("eps * n = {en} is not an integer")));
        }
        drops[k] = en.round() as usize;
    }
    let phi_c = c_transform(phi, support.as_measure(), nu, cost);
    let a = trimmed_sum(phi[..mu.len()].to_vec(), drops[0], mu.len());
    let b = trimmed_sum(phi_c, drops[1], nu.len());
    Ok(a + b)
}

/// Gaps showing that removed μ-mass sits where φ is maximal and removed ν-mass
/// where φ is minimal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StructureReport {
    /// max over supp(μ − μ′) of (max φ − φ(x)).
    pub mu_gap: f64,
    /// max over supp(ν − ν′) of (φ(y) − min φ).
    pub nu_gap: f64,
}

pub fn check_maximizer_structure(solution: &TransportSolution) -> Result<StructureReport> {
    let pot = solution.potentials.as_ref().ok_or(Error::NoPotentials)?;
    let (lo, hi) = range(&pot.phi);
    let lookup = |x: &[f64]| {
        pot.support
            .find(x)
            .map(|s| pot.phi[s])
            .ok_or_else(|| Error::InvalidInput("removed atom outside the support".into()))
    };
    let mut report = StructureReport { mu_gap: 0.0, nu_gap: 0.0 };
    for x in solution.removed_mu.points() {
        report.mu_gap = report.mu_gap.max(hi - lookup(x)?);
    }
    for y in solution.removed_nu.points() {
        report.nu_gap = report.nu_gap.max(lookup(y)? - lo);
    }
    Ok(report)
}

/// Builds a potential on S from transportation duals `u_i + v_j <= c_ij` of the
/// augmented flow. ψ = v is pulled back to S by the c-transform and clipped to
/// `[−max v, max u]`; the resulting objective is at least the dual LP value.
pub(crate) fn from_lp_duals(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
    u: &[f64],
    v: &[f64],
    eps: f64,
    form: DualForm,
) -> DualPotential {
    let support = JointSupport::new(mu, nu);
    let s_measure = support.as_measure();
    let mut phi = c_transform(v, nu, s_measure, cost);
    if eps > 0.0 {
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = -v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for f in phi.iter_mut() {
            *f = match form {
                DualForm::Symmetric => f.min(hi).max(lo.min(hi)),
                DualForm::OneSided => f.min(hi),
            };
        }
    }
    let phi_c = c_transform(&phi, s_measure, nu, cost);
    let objective = match form {
        DualForm::Symmetric => symmetric_value(&phi, &phi_c, mu, nu, eps),
        DualForm::OneSided => one_sided_value(&phi, &phi_c, mu, nu, eps),
    };
    DualPotential { support, phi, phi_c, eps, form, objective }
}

/// Settings for [`dual_ascent`].
#[derive(Clone, Debug)]
pub struct AscentConfig {
    /// Initial step; defaults to (max cost) / 10.
    pub step0: Option<f64>,
    pub iters: usize,
    /// Seeds a tiny perturbation of the zero start that breaks exact ties.
    pub seed: u64,
    /// The iterate is replaced by (φ^c)^c every this many steps.
    pub project_every: usize,
    /// Temperatures of the smoothed refinement that follows the
    /// supergradient phase; zero skips it.
    pub smoothing_stages: usize,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self { step0: None, iters: 5000, seed: 0, project_every: 25, smoothing_stages: 12 }
    }
}

/// Precomputed cost matrices for ascent on the joint support.
struct DualInstance<'a> {
    mu: &'a DiscreteMeasure,
    nu: &'a DiscreteMeasure,
    support: JointSupport,
    /// |S| × m, c(s, y_j).
    c_sn: Vec<f64>,
    /// |S| × |S|.
    c_ss: Vec<f64>,
    eps: f64,
}

impl<'a> DualInstance<'a> {
    fn new(mu: &'a DiscreteMeasure, nu: &'a DiscreteMeasure, cost: &GroundCost, eps: f64) -> Self {
        let support = JointSupport::new(mu, nu);
        let s = support.as_measure();
        Self { c_sn: cost.matrix(s, nu), c_ss: cost.matrix(s, s), support, mu, nu, eps }
    }

    fn phi_c(&self, phi: &[f64]) -> Vec<f64> {
        transform_matrix(phi, &self.c_sn, self.nu.len())
    }

    fn objective(&self, phi: &[f64]) -> f64 {
        symmetric_value(phi, &self.phi_c(phi), self.mu, self.nu, self.eps)
    }

    /// (φ^c)^c with both transforms taken over S.
    fn project(&self, phi: &[f64]) -> Vec<f64> {
        let k = self.support.len();
        let fc = transform_matrix(phi, &self.c_ss, k);
        // c is symmetric, so the same matrix serves for the second transform.
        transform_matrix(&fc, &self.c_ss, k)
    }
}

fn ties(vals: &[f64], target: f64) -> Vec<usize> {
    let tol = 1e-12 * (1.0 + target.abs());
    vals.iter().enumerate().filter(|(_, v)| (**v - target).abs() <= tol).map(|(i, _)| i).collect()
}

/// Projected supergradient ascent on the symmetric dual. Returns the best
/// iterate, made c-concave by a final projection.
pub fn dual_ascent(problem: &RobustProblem, config: &AscentConfig) -> Result<DualPotential> {
    check_radius(problem.eps_mu)?;
    check_pair(&problem.mu, &problem.nu)?;
    let inst = DualInstance::new(&problem.mu, &problem.nu, &problem.cost, problem.eps());
    let k = inst.support.len();
    let m = problem.nu.len();
    let n = problem.mu.len();
    let max_cost = inst.c_sn.iter().fold(0.0f64, |a, &b| a.max(b));
    let step0 = config.step0.unwrap_or(max_cost / 10.0);
    if !(step0.is_finite() && step0 > 0.0) {
        // All costs vanish: φ = 0 is optimal.
        return Ok(finalize(&inst, vec![0.0; k]));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut phi: Vec<f64> = (0..k).map(|_| 1e-9 * step0 * rng.random::<f64>()).collect();
    phi = inst.project(&phi);
    let mut best = phi.clone();
    let mut best_obj = inst.objective(&phi);
    let mut grad = vec![0.0; k];
    let every = config.project_every.max(1);

    for t in 0..config.iters {
        let step = step0 / ((t + 1) as f64).sqrt();
        grad.iter_mut().for_each(|g| *g = 0.0);
        grad[..n].copy_from_slice(problem.mu.weights());
        for j in 0..m {
            let col = |s: usize| inst.c_sn[s * m + j] - phi[s];
            let best_v = (0..k).map(col).fold(f64::INFINITY, f64::min);
            let tol = 1e-12 * (1.0 + best_v.abs());
            let tied: Vec<usize> = (0..k).filter(|&s| col(s) - best_v <= tol).collect();
            let share = problem.nu.weights()[j] / tied.len() as f64;
            tied.iter().for_each(|&s| grad[s] -= share);
        }
        if inst.eps > 0.0 {
            let (lo, hi) = range(&phi);
            let top = ties(&phi, hi);
            let bottom = ties(&phi, lo);
            top.iter().for_each(|&s| grad[s] -= inst.eps / top.len() as f64);
            bottom.iter().for_each(|&s| grad[s] += inst.eps / bottom.len() as f64);
        }
        if grad.iter().all(|g| *g == 0.0) {
            // Zero supergradient: φ is optimal.
            break;
        }
        phi.iter_mut().zip(&grad).for_each(|(f, g)| *f += step * g);
        if (t + 1) % every == 0 {
            phi = inst.project(&phi);
        }
        let obj = inst.objective(&phi);
        if !obj.is_finite() {
            return Err(Error::NumericalFailure(format!("non-finite dual objective at step {t}")));
        }
        if obj > best_obj {
            best_obj = obj;
            best.copy_from_slice(&phi);
        }
    }
    if config.smoothing_stages > 0 {
        let mut lambda = max_cost / 10.0;
        for _ in 0..config.smoothing_stages {
            let cand = center(inst.project(&smoothed_maximize(&inst, &best, lambda, max_cost, 200)));
            let obj = inst.objective(&cand);
            if !obj.is_finite() {
                return Err(Error::NumericalFailure("non-finite dual objective in smoothing".into()));
            }
            if obj > best_obj {
                best_obj = obj;
                best = cand;
            }
            lambda *= 0.3;
        }
    }
    Ok(finalize(&inst, best))
}

/// λ·log Σ exp(v/λ) and the softmax weights.
fn soft_max(v: impl Iterator<Item = f64> + Clone, lambda: f64, weights: &mut [f64]) -> f64 {
    let top = v.clone().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (w, x) in weights.iter_mut().zip(v) {
        *w = ((x - top) / lambda).exp();
        z += *w;
    }
    weights.iter_mut().for_each(|w| *w /= z);
    top + lambda * z.ln()
}

impl DualInstance<'_> {
    /// Smoothed objective (min and max replaced by log-sum-exp at temperature
    /// λ) and its gradient.
    fn smoothed(&self, phi: &[f64], lambda: f64, grad: &mut [f64]) -> f64 {
        let k = self.support.len();
        let m = self.nu.len();
        let n = self.mu.len();
        let mut w = vec![0.0; k];
        grad.iter_mut().for_each(|g| *g = 0.0);
        grad[..n].copy_from_slice(self.mu.weights());
        let mut value = mu_term(phi, self.mu);
        for (j, &nj) in self.nu.weights().iter().enumerate() {
            let v = (0..k).map(|s| phi[s] - self.c_sn[s * m + j]);
            value -= nj * soft_max(v, lambda, &mut w);
            grad.iter_mut().zip(&w).for_each(|(g, ws)| *g -= nj * ws);
        }
        if self.eps > 0.0 {
            value -= self.eps * soft_max(phi.iter().copied(), lambda, &mut w);
            grad.iter_mut().zip(&w).for_each(|(g, ws)| *g -= self.eps * ws);
            value -= self.eps * soft_max(phi.iter().map(|x| -x), lambda, &mut w);
            grad.iter_mut().zip(&w).for_each(|(g, ws)| *g += self.eps * ws);
        }
        value
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS ascent on the smoothed objective with Armijo backtracking.
fn smoothed_maximize(inst: &DualInstance, start: &[f64], lambda: f64, max_step: f64, max_iter: usize) -> Vec<f64> {
    const HISTORY: usize = 10;
    let k = start.len();
    let mut x = start.to_vec();
    let mut g = vec![0.0; k];
    let mut f = inst.smoothed(&x, lambda, &mut g);
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut g_new = vec![0.0; k];
    for _ in 0..max_iter {
        // Two-loop recursion on the ascent direction.
        let mut d = g.clone();
        let mut alpha = vec![0.0; s_hist.len()];
        for i in (0..s_hist.len()).rev() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            alpha[i] = rho * dot(&s_hist[i], &d);
            d.iter_mut().zip(&y_hist[i]).for_each(|(di, yi)| *di -= alpha[i] * yi);
        }
        if let (Some(s), Some(y)) = (s_hist.last(), y_hist.last()) {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|di| *di *= gamma);
        } else {
            let gn = g.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if gn == 0.0 {
                break;
            }
            d.iter_mut().for_each(|di| *di *= lambda / gn);
        }
        for i in 0..s_hist.len() {
            let rho = 1.0 / dot(&y_hist[i], &s_hist[i]);
            let beta = rho * dot(&y_hist[i], &d);
            d.iter_mut().zip(&s_hist[i]).for_each(|(di, si)| *di += (alpha[i] - beta) * si);
        }
        let mut slope = dot(&g, &d);
        if slope <= 0.0 {
            d.copy_from_slice(&g);
            slope = dot(&g, &g);
            s_hist.clear();
            y_hist.clear();
        }
        if slope <= 1e-300 {
            break;
        }
        // Flat directions exist (e.g. potentials off supp(μ) when ε = 0); cap the move.
        let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let mut t = if dmax > max_step { max_step / dmax } else { 1.0 };
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = x.iter().zip(&d).map(|(xi, di)| xi + t * di).collect();
            let f_trial = inst.smoothed(&trial, lambda, &mut g_new);
            if f_trial >= f + 1e-4 * t * slope {
                accepted = Some((trial, f_trial));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new)) = accepted else { break };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        // Ascent: curvature pairs use the negated gradient difference.
        let y: Vec<f64> = g.iter().zip(&g_new).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 1e-16 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() {
            if s_hist.len() == HISTORY {
                s_hist.remove(0);
                y_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
        }
        let improvement = f_new - f;
        x = x_new;
        f = f_new;
        g.copy_from_slice(&g_new);
        if improvement <= 1e-15 * (1.0 + f.abs()) {
            break;
        }
    }
    x
}

fn center(mut phi: Vec<f64>) -> Vec<f64> {
    let (lo, hi) = range(&phi);
    let mid = 0.5 * (lo + hi);
    phi.iter_mut().for_each(|x| *x -= mid);
    phi
}

fn finalize(inst: &DualInstance, phi: Vec<f64>) -> DualPotential {
    let phi = inst.project(&phi);
    let phi_c = inst.phi_c(&phi);
    let objective = symmetric_value(&phi, &phi_c, inst.mu, inst.nu, inst.eps);
    DualPotential { support: inst.support.clone(), phi, phi_c, eps: inst.eps, form: DualForm::Symmetric, objective }
}

/// (φ^c)^c over the joint support of `mu` and `nu`.
pub fn c_concave_projection(phi: &[f64], mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost) -> Result<Vec<f64>> {
    check_pair(mu, nu)?;
    let inst = DualInstance::new(mu, nu, cost, 0.0);
    check_phi(phi, &inst.support)?;
    Ok(inst.project(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{one_sided, solve_robust};
    use crate::testutil::{line, random_measure, random_uniform, rng};
    use rand::Rng;

    fn euclid(p: f64) -> GroundCost {
        GroundCost::euclidean(p).unwrap()
    }

    #[test]
    fn constant_potential_shifts_transform() {
        let mut r = rng(1);
        let mu = random_measure(&mut r, 5, 2);
        let nu = random_measure(&mut r, 4, 2);
        let c = euclid(2.0);
        let zero = c_transform(&[0.0; 5], &mu, &nu, &c);
        let shifted = c_transform(&[1.5; 5], &mu, &nu, &c);
        for (a, b) in zero.iter().zip(&shifted) {
            assert!((a - 1.5 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lipschitz_potential_is_anti_transform() {
        let m = line(&[0.0, 0.5, 2.0, 3.0], &[0.25; 4]);
        let phi = [0.0, 0.3, -0.5, 0.2];
        let fc = c_transform(&phi, &m, &m, &euclid(1.0));
        for (a, b) in fc.iter().zip(&phi) {
            assert!((a + b).abs() < 1e-12);
        }
    }

    #[test]
    fn triple_transform_is_single() {
        let mut r = rng(2);
        let mu = random_measure(&mut r, 6, 2);
        let nu = random_measure(&mut r, 7, 2);
        let c = euclid(1.5);
        let phi: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
        let fc = c_transform(&phi, &mu, &nu, &c);
        let fcc = c_transform(&fc, &nu, &mu, &c);
        let fccc = c_transform(&fcc, &mu, &nu, &c);
        for (a, b) in fc.iter().zip(&fccc) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_potential_with_nested_support() {
        let mu = line(&[0.0, 1.0, 2.0], &[0.2, 0.3, 0.5]);
        let nu = line(&[1.0, 2.0], &[0.5, 0.5]);
        let p = RobustProblem::symmetric(mu, nu, euclid(1.0), 0.1);
        assert_eq!(dual_objective(&[0.0; 3], &p).unwrap(), 0.0);
    }

    #[test]
    fn weak_duality_and_shift_invariance() {
        let mut r = rng(3);
        for _ in 0..50 {
            let (n, m) = (r.random_range(1..7), r.random_range(1..7));
            let mu = random_measure(&mut r, n, 2);
            let nu = random_measure(&mut r, m, 2);
            let eps = r.random_range(0.0..0.5);
            let p = RobustProblem::symmetric(mu, nu, euclid(2.0), eps);
            let primal = solve_robust(&p).unwrap().value_p;
            let k = JointSupport::new(&p.mu, &p.nu).len();
            let phi: Vec<f64> = (0..k).map(|_| r.random_range(-3.0..3.0)).collect();
            let obj = dual_objective(&phi, &p).unwrap();
            assert!(obj <= primal + 1e-8, "{obj} > {primal}");
            let shifted: Vec<f64> = phi.iter().map(|x| x + 0.7).collect();
            assert!((dual_objective(&shifted, &p).unwrap() - obj).abs() < 1e-12);
        }
    }

    #[test]
    fn lp_potentials_close_the_gap() {
        let mut r = rng(4);
        for _ in 0..30 {
            let (n, m) = (r.random_range(1..9), r.random_range(1..9));
            let mu = random_measure(&mut r, n, 2);
            let nu = random_measure(&mut r, m, 2);
            let eps = [0.0, 0.1, 0.3][r.random_range(0..3)];
            let p = RobustProblem::symmetric(mu, nu, euclid(1.0), eps);
            let sol = solve_robust(&p).unwrap();
            let pot = sol.potentials.as_ref().unwrap();
            let obj = dual_objective(&pot.phi, &p).unwrap();
            assert!((obj - sol.value_p).abs() < 1e-7);
            assert!((pot.objective - obj).abs() < 1e-12);
        }
    }

    #[test]
    fn ascent_reaches_zero_value() {
        let mu = line(&[0.0, 1.0], &[0.5, 0.5]);
        let nu = line(&[0.0, 3.0], &[0.5, 0.5]);
        let p = RobustProblem::symmetric(mu, nu, euclid(1.0), 0.5);
        let pot = dual_ascent(&p, &AscentConfig::default()).unwrap();
        assert!(pot.objective.abs() < 1e-4);
    }

    #[test]
    fn ascent_matches_primal_and_is_c_concave() {
        let mut r = rng(5);
        let mu = random_measure(&mut r, 5, 2);
        let nu = random_measure(&mut r, 5, 2);
        let p = RobustProblem::symmetric(mu, nu, euclid(1.0), 0.2);
        let primal = solve_robust(&p).unwrap().value_p;
        let pot = dual_ascent(&p, &AscentConfig::default()).unwrap();
        assert!((primal - pot.objective).abs() <= 1e-3 * primal);
        let proj = c_concave_projection(&pot.phi, &p.mu, &p.nu, &p.cost).unwrap();
        for (a, b) in proj.iter().zip(&pot.phi) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn pure_supergradient_never_exceeds_primal() {
        let mut r = rng(6);
        let mu = random_measure(&mut r, 6, 1);
        let nu = random_measure(&mut r, 4, 1);
        let p = RobustProblem::symmetric(mu, nu, euclid(2.0), 0.1);
        let primal = solve_robust(&p).unwrap().value_p;
        let cfg = AscentConfig { iters: 300, smoothing_stages: 0, ..Default::default() };
        let pot = dual_ascent(&p, &cfg).unwrap();
        assert!(pot.objective <= primal + 1e-9);
        assert!(pot.objective > 0.0);
    }

    #[test]
    fn transform_contracts_centered_potential() {
        let mut r = rng(7);
        let m = random_measure(&mut r, 8, 2);
        let c = euclid(1.0);
        let phi: Vec<f64> = (0..8).map(|_| r.random_range(-2.0..2.0)).collect();
        let (lo, hi) = range(&phi);
        let centered: Vec<f64> = phi.iter().map(|x| x - 0.5 * (lo + hi)).collect();
        let fc = c_transform(&centered, &m, &m, &c);
        let norm = |v: &[f64]| v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        assert!(norm(&fc) <= norm(&centered) + 1e-12);
    }

    #[test]
    fn loss_trimming_identities() {
        let mut r = rng(8);
        let c = euclid(1.0);
        for _ in 0..20 {
            let mu = random_uniform(&mut r, 10, 2);
            let nu = random_uniform(&mut r, 10, 2);
            let eps = [0.0, 0.1, 0.3][r.random_range(0..3)];
            let p = RobustProblem::symmetric(mu.clone(), nu.clone(), c, eps);
            let sol = solve_robust(&p).unwrap();
            let phi = &sol.potentials.as_ref().unwrap().phi;
            let lt = loss_trimming_objective(phi, &mu, &nu, &c, eps).unwrap();
            assert!((lt - sol.value_p).abs() < 1e-7);
            let k = phi.len();
            let rand_phi: Vec<f64> = (0..k).map(|_| r.random_range(-2.0..2.0)).collect();
            let trimmed = loss_trimming_objective(&rand_phi, &mu, &nu, &c, eps).unwrap();
            assert!(trimmed >= dual_objective(&rand_phi, &p).unwrap() - 1e-12);
            if eps == 0.0 {
                let fc = c_transform(&rand_phi, p_support(&mu, &nu).as_measure(), &nu, &c);
                let plain = mu_term(&rand_phi, &mu) + nu_term(&fc, &nu);
                assert!((trimmed - plain).abs() < 1e-12);
            }
        }
    }

    fn p_support(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> JointSupport {
        JointSupport::new(mu, nu)
    }

    #[test]
    fn loss_trimming_preconditions() {
        let mut r = rng(9);
        let c = euclid(1.0);
        let mu = random_uniform(&mut r, 10, 1);
        let nu = random_measure(&mut r, 10, 1);
        let k = p_support(&mu, &nu).len();
        let err = loss_trimming_objective(&vec![0.0; k], &mu, &nu, &c, 0.1);
        assert!(matches!(err, Err(Error::Unsupported(_))));
        let nu = random_uniform(&mut r, 10, 1);
        let k = p_support(&mu, &nu).len();
        let err = loss_trimming_objective(&vec![0.0; k], &mu, &nu, &c, 0.15);
        assert!(matches!(err, Err(Error::Unsupported(_))));
    }

    #[test]
    fn one_sided_dual_identities() {
        let mut r = rng(10);
        let c = euclid(1.5);
        for _ in 0..20 {
            let mu = random_measure(&mut r, 7, 2);
            let nu = random_measure(&mut r, 5, 2);
            let eps = r.random_range(0.0..0.4);
            let sol = one_sided(&mu, &nu, &c, eps).unwrap();
            let phi = &sol.potentials.as_ref().unwrap().phi;
            let obj = one_sided_dual_objective(phi, &mu, &nu, &c, eps).unwrap();
            assert!((obj - sol.value_p).abs() < 1e-7);
            let rand_phi: Vec<f64> = (0..phi.len()).map(|_| r.random_range(-2.0..2.0)).collect();
            assert!(one_sided_dual_objective(&rand_phi, &mu, &nu, &c, eps).unwrap() <= sol.value_p + 1e-8);
        }
        // ε = 0 is the plain Kantorovich objective.
        let mu = random_measure(&mut r, 4, 2);
        let nu = random_measure(&mut r, 3, 2);
        let phi: Vec<f64> = (0..7).map(|_| r.random_range(-1.0..1.0)).collect();
        let fc = c_transform(&phi, p_support(&mu, &nu).as_measure(), &nu, &c);
        let plain = mu_term(&phi, &mu) + nu_term(&fc, &nu);
        assert!((one_sided_dual_objective(&phi, &mu, &nu, &c, 0.0).unwrap() - plain).abs() < 1e-12);
    }

    #[test]
    fn one_sided_directional_derivative_at_argmax() {
        // The argmax atom at 100 is too far away to attain any c-transform minimum.
        let mu = line(&[0.0, 1.0, 100.0], &[0.5, 0.3, 0.2]);
        let nu = line(&[0.0, 1.0, 2.0], &[0.4, 0.4, 0.2]);
        let c = euclid(1.0);
        let eps = 0.1;
        let phi = [0.0, 0.1, 5.0, 0.0];
        let base = one_sided_dual_objective(&phi, &mu, &nu, &c, eps).unwrap();
        let delta = 1e-3;
        let bumped = [0.0, 0.1, 5.0 + delta, 0.0];
        let moved = one_sided_dual_objective(&bumped, &mu, &nu, &c, eps).unwrap();
        assert!((moved - base - (0.2 - eps) * delta).abs() < 1e-12);
    }

    #[test]
    fn structure_report() {
        let c = euclid(1.0);
        let mu = line(&[0.0, 100.0], &[0.8, 0.2]);
        let nu = line(&[1.0, -100.0], &[0.8, 0.2]);
        let sol = solve_robust(&RobustProblem::symmetric(mu.clone(), nu.clone(), c, 0.2)).unwrap();
        let rep = check_maximizer_structure(&sol).unwrap();
        assert!(rep.mu_gap.abs() < 1e-8 && rep.nu_gap.abs() < 1e-8);

        let sol0 = solve_robust(&RobustProblem::symmetric(mu, nu, c, 0.0)).unwrap();
        assert_eq!(check_maximizer_structure(&sol0).unwrap(), StructureReport { mu_gap: 0.0, nu_gap: 0.0 });

        let mut r = rng(11);
        for _ in 0..10 {
            let mu = random_measure(&mut r, 8, 2);
            let nu = random_measure(&mut r, 8, 2);
            let sol = solve_robust(&RobustProblem::symmetric(mu, nu, euclid(2.0), 0.25)).unwrap();
            let rep = check_maximizer_structure(&sol).unwrap();
            assert!(rep.mu_gap <= 1e-6 && rep.nu_gap <= 1e-6, "{rep:?}");
        }

        let mut stripped = sol0.clone();
        stripped.potentials = None;
        assert!(matches!(check_maximizer_structure(&stripped), Err(Error::NoPotentials)));
    }
}
