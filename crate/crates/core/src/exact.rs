//! Exact W_p, W_p^ε, asymmetric and one-sided robust distances by min-cost flow.
//!
//! Partial transport is reduced to balanced transport by appending a dummy
//! atom to each side. The dummy row absorbs the ν-mass that is dropped, the
//! dummy column absorbs the μ-mass that is dropped; both have zero cost to
//! every real atom and cost `A = 1 + max c` to each other.

use std::collections::HashMap;

use serde::Serialize;

use crate::dual::{self, DualForm, DualPotential, JointSupport};
use crate::error::{check_radius, Error, Result};
use crate::flow::{integerize, Network};
use crate::measures::{point_key, DiscreteMeasure, GroundCost, MASS_TOL};

/// Integer units per unit of mass in the flow kernel. A power of ten keeps
/// decimal weights exact; totals above 1e6 are scaled down to avoid overflow.
pub const FLOW_SCALE: f64 = 1e12;

fn flow_scale(total: f64) -> f64 {
    if total <= 1e6 {
        FLOW_SCALE
    } else {
        FLOW_SCALE * 1e6 / total
    }
}

/// A robust transport instance.
#[derive(Clone, Debug)]
pub struct RobustProblem {
    pub mu: DiscreteMeasure,
    pub nu: DiscreteMeasure,
    pub cost: GroundCost,
    pub eps_mu: f64,
    pub eps_nu: f64,
}

impl RobustProblem {
    /// Symmetric instance with ε_μ = ε_ν = `eps`.
    pub fn symmetric(mu: DiscreteMeasure, nu: DiscreteMeasure, cost: GroundCost, eps: f64) -> Self {
        Self { mu, nu, cost, eps_mu: eps, eps_nu: eps }
    }

    pub fn eps(&self) -> f64 {
        self.eps_mu
    }

    pub(crate) fn validate(&self) -> Result<()> {
        check_radius(self.eps_mu)?;
        check_radius(self.eps_nu)?;
        check_pair(&self.mu, &self.nu)?;
        self.mu.require_probability()?;
        self.nu.require_probability()
    }

    pub(crate) fn require_symmetric(&self) -> Result<()> {
        if self.eps_mu != self.eps_nu {
            return Err(Error::InvalidInput(format!(
                "symmetric radii required, got {} and {}",
                self.eps_mu, self.eps_nu
            )));
        }
        Ok(())
    }
}

/// One entry of a sparse transport plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PlanEntry {
    pub i: usize,
    pub j: usize,
    pub mass: f64,
}

/// Result of a transport solve.
#[derive(Clone, Debug)]
pub struct TransportSolution {
    /// The distance, `value_p^(1/p)`.
    pub value: f64,
    /// Optimal cost in cost units.
    pub value_p: f64,
    /// Sparse plan over supp(μ) × supp(ν) (indices into the input supports).
    pub plan: Vec<PlanEntry>,
    /// μ − μ′.
    pub removed_mu: DiscreteMeasure,
    /// ν − ν′.
    pub removed_nu: DiscreteMeasure,
    pub potentials: Option<DualPotential>,
    /// Set by engines that do not solve to optimality.
    pub approximate: bool,
}

impl TransportSolution {
    /// Row sums of the plan.
    pub fn row_sums(&self, n: usize) -> Vec<f64> {
        let mut r = vec![0.0; n];
        self.plan.iter().for_each(|e| r[e.i] += e.mass);
        r
    }

    /// Column sums of the plan.
    pub fn col_sums(&self, m: usize) -> Vec<f64> {
        let mut c = vec![0.0; m];
        self.plan.iter().for_each(|e| c[e.j] += e.mass);
        c
    }

    /// Recomputes Σ π_ij c(x_i, y_j).
    pub fn plan_cost(&self, mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost) -> f64 {
        self.plan.iter().map(|e| e.mass * cost.cost(mu.point(e.i), nu.point(e.j))).sum()
    }
}

pub(crate) fn check_pair(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<()> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::EmptyInput);
    }
    if mu.dim() != nu.dim() {
        return Err(Error::InvalidDimensions(format!("{} vs {}", mu.dim(), nu.dim())));
    }
    Ok(())
}

pub(crate) fn root(value_p: f64, p: f64) -> f64 {
    let v = value_p.max(0.0);
    if p == 1.0 {
        v
    } else {
        v.powf(1.0 / p)
    }
}

/// Raw output of the augmented flow: plan, per-atom removed masses and LP duals
/// `u` (rows) and `v` (columns) with `u_i + v_j <= c_ij`.
pub(crate) struct Augmented {
    pub value_p: f64,
    pub plan: Vec<PlanEntry>,
    pub removed_a: Vec<f64>,
    pub removed_b: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

/// Transports all but `remove_a` of `a` onto all but `remove_b` of `b`
/// (requires `Σa − remove_a = Σb − remove_b`). `c` is row-major n × m.
pub(crate) fn augmented_flow(a: &[f64], b: &[f64], c: &[f64], remove_a: f64, remove_b: f64) -> Result<Augmented> {
    let (n, m) = (a.len(), b.len());
    let max_c = c.iter().fold(0.0f64, |acc, &x| acc.max(x));
    let big_a = 1.0 + max_c;
    let mut rows = a.to_vec();
    rows.push(remove_b);
    let mut cols = b.to_vec();
    cols.push(remove_a);
    let total_r: f64 = rows.iter().sum();
    let total_c: f64 = cols.iter().sum();
    if (total_r - total_c).abs() > MASS_TOL * total_r.max(1.0) {
        return Err(Error::MassMismatch { left: total_r, right: total_c });
    }
    let scale = flow_scale(total_r);
    let (ri, ci) = integerize(&rows, &cols, scale);
    let mut supply = ri;
    supply.extend(ci.iter().map(|x| -x));
    let mut net = Network::with_nodes(supply);
    for i in 0..=n {
        for j in 0..=m {
            let cost = match (i < n, j < m) {
                (true, true) => c[i * m + j],
                (false, false) => big_a,
                _ => 0.0,
            };
            net.add_arc(i, n + 1 + j, cost);
        }
    }
    let sol = net.solve()?;
    let mut plan = Vec::new();
    let mut removed_a = vec![0.0; n];
    let mut removed_b = vec![0.0; m];
    let mut value_p = 0.0;
    for i in 0..=n {
        for j in 0..=m {
            let f = sol.flow[i * (m + 1) + j];
            if f == 0 {
                continue;
            }
            let mass = f as f64 / scale;
            match (i < n, j < m) {
                (true, true) => {
                    value_p += mass * c[i * m + j];
                    plan.push(PlanEntry { i, j, mass });
                }
                (true, false) => removed_a[i] = mass,
                (false, true) => removed_b[j] = mass,
                (false, false) => {
                    return Err(Error::NumericalFailure("flow on the dummy-dummy arc".into()));
                }
            }
        }
    }
    let u = (0..n).map(|i| -sol.pi[i]).collect();
    let v = (0..m).map(|j| sol.pi[n + 1 + j]).collect();
    Ok(Augmented { value_p, plan, removed_a, removed_b, u, v })
}

fn sub_measure(base: &DiscreteMeasure, w: &[f64]) -> DiscreteMeasure {
    DiscreteMeasure::merged(base.dim(), base.coords(), w)
}

/// Classic W_p between measures of equal mass.
pub fn solve_standard(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost) -> Result<TransportSolution> {
    check_pair(mu, nu)?;
    let (a, b) = (mu.mass(), nu.mass());
    if (a - b).abs() > MASS_TOL {
        return Err(Error::MassMismatch { left: a, right: b });
    }
    let c = cost.matrix(mu, nu);
    let aug = augmented_flow(mu.weights(), nu.weights(), &c, 0.0, 0.0)?;
    let potentials = dual::from_lp_duals(mu, nu, cost, &aug.u, &aug.v, 0.0, DualForm::Symmetric);
    Ok(finish(mu, nu, cost, aug, Some(potentials)))
}

fn finish(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
    aug: Augmented,
    potentials: Option<DualPotential>,
) -> TransportSolution {
    TransportSolution {
        value: root(aug.value_p, cost.p),
        value_p: aug.value_p,
        removed_mu: sub_measure(mu, &aug.removed_a),
        removed_nu: sub_measure(nu, &aug.removed_b),
        plan: aug.plan,
        potentials,
        approximate: false,
    }
}

/// Symmetric robust distance W_p^ε(μ, ν).
pub fn solve_robust(problem: &RobustProblem) -> Result<TransportSolution> {
    problem.validate()?;
    problem.require_symmetric()?;
    let RobustProblem { mu, nu, cost, .. } = problem;
    let eps = problem.eps();
    if let Some(sol) = within_shared_mass(mu, nu, cost, eps) {
        return Ok(sol);
    }
    let c = cost.matrix(mu, nu);
    let aug = augmented_flow(mu.weights(), nu.weights(), &c, eps, eps)?;
    let potentials = dual::from_lp_duals(mu, nu, cost, &aug.u, &aug.v, eps, DualForm::Symmetric);
    Ok(finish(mu, nu, cost, aug, Some(potentials)))
}

/// When ε ≥ ‖μ − ν‖_tv the optimum is zero: keep a (1 − ε)-scaled copy of
/// μ ∧ ν in place. Handled directly because the integer flow would leave a
/// quantum of mass in transit, which the p-th root magnifies.
fn within_shared_mass(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost, eps: f64) -> Option<TransportSolution> {
    let index: HashMap<Vec<u64>, usize> = nu.points().enumerate().map(|(j, y)| (point_key(y), j)).collect();
    let pairs: Vec<(usize, usize, f64)> = mu
        .points()
        .enumerate()
        .filter_map(|(i, x)| index.get(&point_key(x)).map(|&j| (i, j, mu.weights()[i].min(nu.weights()[j]))))
        .collect();
    let shared: f64 = pairs.iter().map(|t| t.2).sum();
    let keep = 1.0 - eps;
    if keep > shared + 1e-12 {
        return None;
    }
    let scale = if shared > 0.0 { (keep / shared).min(1.0) } else { 0.0 };
    let (mut ra, mut rb) = (mu.weights().to_vec(), nu.weights().to_vec());
    let plan: Vec<PlanEntry> = pairs
        .iter()
        .filter(|t| t.2 * scale > 0.0)
        .map(|&(i, j, w)| {
            ra[i] = (ra[i] - w * scale).max(0.0);
            rb[j] = (rb[j] - w * scale).max(0.0);
            PlanEntry { i, j, mass: w * scale }
        })
        .collect();
    let (zu, zv) = (vec![0.0; mu.len()], vec![0.0; nu.len()]);
    Some(TransportSolution {
        value: 0.0,
        value_p: 0.0,
        plan,
        removed_mu: sub_measure(mu, &ra),
        removed_nu: sub_measure(nu, &rb),
        potentials: Some(dual::from_lp_duals(mu, nu, cost, &zu, &zv, eps, DualForm::Symmetric)),
        approximate: false,
    })
}

/// Asymmetric W_p^{ε1,ε2}(μ, ν) = inf Wp((1−ε2)μ′, (1−ε1)ν′) over μ′ ≤ μ with
/// mass 1−ε1 and ν′ ≤ ν with mass 1−ε2. Removed masses are reported on the
/// unscaled measures (masses ε1 and ε2); the plan lives on the scaled ones.
pub fn solve_asymmetric(problem: &RobustProblem) -> Result<TransportSolution> {
    problem.validate()?;
    let RobustProblem { mu, nu, cost, eps_mu: e1, eps_nu: e2 } = problem;
    let (e1, e2) = (*e1, *e2);
    let a: Vec<f64> = mu.weights().iter().map(|w| (1.0 - e2) * w).collect();
    let b: Vec<f64> = nu.weights().iter().map(|w| (1.0 - e1) * w).collect();
    let c = cost.matrix(mu, nu);
    let mut aug = augmented_flow(&a, &b, &c, (1.0 - e2) * e1, (1.0 - e1) * e2)?;
    aug.removed_a.iter_mut().for_each(|w| *w /= 1.0 - e2);
    aug.removed_b.iter_mut().for_each(|w| *w /= 1.0 - e1);
    Ok(finish(mu, nu, cost, aug, None))
}

/// One-sided W_p^ε(μ̃ ‖ ν) = inf Wp(μ′, (1−ε)ν) over μ′ ≤ μ̃ with mass 1−ε.
pub fn one_sided(mu_tilde: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &GroundCost, eps: f64) -> Result<TransportSolution> {
    check_radius(eps)?;
    check_pair(mu_tilde, nu)?;
    mu_tilde.require_probability()?;
    nu.require_probability()?;
    let b: Vec<f64> = nu.weights().iter().map(|w| (1.0 - eps) * w).collect();
    let c = cost.matrix(mu_tilde, nu);
    let aug = augmented_flow(mu_tilde.weights(), &b, &c, eps, 0.0)?;
    let potentials = dual::from_lp_duals(mu_tilde, nu, cost, &aug.u, &aug.v, eps, DualForm::OneSided);
    Ok(finish(mu_tilde, nu, cost, aug, Some(potentials)))
}

/// Partial transport moving exactly `mass` between two arbitrary measures.
pub fn partial_transport(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: &GroundCost,
    mass: f64,
) -> Result<TransportSolution> {
    check_pair(mu, nu)?;
    let (a, b) = (mu.mass(), nu.mass());
    if !(mass >= 0.0 && mass <= a.min(b) + MASS_TOL) {
        return Err(Error::InvalidInput(format!("cannot transport {mass} between masses {a} and {b}")));
    }
    let mass = mass.min(a.min(b));
    let c = cost.matrix(mu, nu);
    let aug = augmented_flow(mu.weights(), nu.weights(), &c, a - mass, b - mass)?;
    Ok(finish(mu, nu, cost, aug, None))
}

/// Solves the removal formulation and the mass-addition formulation
/// inf { Wp(μ′, ν′)^p : μ′ ≥ μ, ν′ ≥ ν, μ′(X) = ν′(X) = 1 + ε } as two separate
/// flow problems and returns `(removal, addition)` in cost units.
pub fn verify_mass_addition(problem: &RobustProblem) -> Result<(f64, f64)> {
    let removal = solve_robust(problem)?.value_p;
    let eps = problem.eps();
    let support = JointSupport::new(&problem.mu, &problem.nu);
    let k = support.len();
    let mut mu_w = vec![0.0; k];
    mu_w[..problem.mu.len()].copy_from_slice(problem.mu.weights());
    let mut nu_w = vec![0.0; k];
    for (j, &s) in support.nu_index().iter().enumerate() {
        nu_w[s] = problem.nu.weights()[j];
    }
    // Nodes: 0 = extra μ-mass source, 1..=k rows, k+1..=2k columns, 2k+1 = extra ν-mass sink.
    let mut rows = mu_w.clone();
    rows.push(eps);
    let mut cols = nu_w.clone();
    cols.push(eps);
    let scale = flow_scale(1.0 + eps);
    let (ri, ci) = integerize(&rows, &cols, scale);
    let mut supply = vec![ri[k]];
    supply.extend_from_slice(&ri[..k]);
    supply.extend(ci[..k].iter().map(|x| -x));
    supply.push(-ci[k]);
    let mut net = Network::with_nodes(supply);
    for s in 0..k {
        net.add_arc(0, 1 + s, 0.0);
    }
    for s in 0..k {
        for t in 0..k {
            net.add_arc(1 + s, 1 + k + t, problem.cost.cost(support.point(s), support.point(t)));
        }
    }
    for t in 0..k {
        net.add_arc(1 + k + t, 2 * k + 1, 0.0);
    }
    let sol = net.solve()?;
    let addition = (0..k * k)
        .map(|e| sol.flow[k + e] as f64 / scale * net.cost[k + e])
        .sum::<f64>();
    Ok((removal, addition))
}
