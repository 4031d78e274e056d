//! Entropic fast path for W_p^ε.
//!
//! Sinkhorn runs on the same augmented problem as the exact engine: rows are
//! μ plus a dummy of mass ε, columns are ν plus a dummy of mass ε, and the
//! dummy pair costs `A = 1 + max c`. Iterations are carried out on log-domain
//! potentials `f, g` with the plan `P_ij = a_i b_j exp((f_i + g_j − c_ij)/λ)`,
//! so tiny λ never overflows the kernel. λ is annealed geometrically from
//! `A` down to the target, warm-starting each stage.
//!
//! The final iterate is rounded onto the exact marginals (row and column
//! rescaling followed by a rank-one correction). Whatever mass the rounding
//! leaves on the dummy pair is then routed off the most expensive real
//! entries, so the returned plan removes exactly ε from each side and its cost
//! is an upper bound on the exact value.

use crate::dual::{self, DualForm};
use crate::error::{Error, Result};
use crate::exact::{root, PlanEntry, RobustProblem, TransportSolution};
use crate::measures::DiscreteMeasure;

/// Settings for [`solve_robust_entropic`].
#[derive(Clone, Debug)]
pub struct SinkhornConfig {
    /// Entropic regularization λ in cost units.
    pub reg: f64,
    /// Total iteration budget across all annealing stages.
    pub max_iters: usize,
    /// L1 marginal violation accepted at the target λ.
    pub tol: f64,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self { reg: 0.01, max_iters: 100_000, tol: 1e-9 }
    }
}

impl SinkhornConfig {
    pub fn new(reg: f64) -> Self {
        Self { reg, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if !(self.reg.is_finite() && self.reg > 0.0) {
            return Err(Error::InvalidInput(format!("reg must be positive, got {}", self.reg)));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

/// Diagnostics of a Sinkhorn run.
#[derive(Clone, Debug, Default)]
pub struct SinkhornTrace {
    /// Regularized dual objective after every iteration at the target λ.
    pub dual_objective: Vec<f64>,
    pub iterations: usize,
    /// Final L1 row-marginal violation before rounding.
    pub violation: f64,
}

/// Entropic approximation of the symmetric W_p^ε. The plan is feasible and
/// the solution is flagged `approximate`.
pub fn solve_robust_entropic(problem: &RobustProblem, config: &SinkhornConfig) -> Result<TransportSolution> {
    solve_entropic_traced(problem, config).map(|(s, _)| s)
}

/// [`solve_robust_entropic`] that also returns the iteration trace.
pub fn solve_entropic_traced(
    problem: &RobustProblem,
    config: &SinkhornConfig,
) -> Result<(TransportSolution, SinkhornTrace)> {
    problem.validate()?;
    problem.require_symmetric()?;
    config.validate()?;
    let RobustProblem { mu, nu, cost, .. } = problem;
    let eps = problem.eps();
    let (n, m) = (mu.len(), nu.len());
    let c = cost.matrix(mu, nu);
    let big_a = 1.0 + c.iter().fold(0.0f64, |acc, &x| acc.max(x));

    // With ε = 0 the dummies carry no mass and are left out.
    let (rn, cm) = if eps > 0.0 { (n + 1, m + 1) } else { (n, m) };
    let mut a = mu.weights().to_vec();
    let mut b = nu.weights().to_vec();
    if eps > 0.0 {
        a.push(eps);
        b.push(eps);
    }
    let mut cbar = vec![0.0; rn * cm];
    for i in 0..rn {
        for j in 0..cm {
            cbar[i * cm + j] = match (i < n, j < m) {
                (true, true) => c[i * m + j],
                (false, false) => big_a,
                _ => 0.0,
            };
        }
    }
    let cbar_t = transpose(&cbar, rn, cm);
    let log_a: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let log_b: Vec<f64> = b.iter().map(|x| x.ln()).collect();

    let mut f = vec![0.0; rn];
    let mut g = vec![0.0; cm];
    let mut trace = SinkhornTrace::default();
    let mut lambda = big_a.max(config.reg);
    let mut scratch = vec![0.0; rn.max(cm)];
    loop {
        let target = lambda <= config.reg;
        let stage_tol = if target { config.tol } else { 1e-3 };
        loop {
            // f-update; the violation of the current iterate's row marginals
            // comes out of the same log-sum-exp.
            let mut violation = 0.0;
            for i in 0..rn {
                let row = &cbar[i * cm..(i + 1) * cm];
                let new = -lambda * lse(row, &g, &log_b, lambda, &mut scratch);
                violation += a[i] * ((f[i] - new) / lambda).exp_m1().abs();
                f[i] = new;
            }
            if trace.iterations > 0 {
                trace.violation = violation;
                if violation <= stage_tol {
                    break;
                }
            }
            if trace.iterations >= config.max_iters {
                break;
            }
            for j in 0..cm {
                let col = &cbar_t[j * rn..(j + 1) * rn];
                g[j] = -lambda * lse(col, &f, &log_a, lambda, &mut scratch);
            }
            trace.iterations += 1;
            if target {
                // Column marginals are exact after the g-update, so the
                // regularized dual reduces to the linear part.
                trace.dual_objective.push(dot(&a, &f) + dot(&b, &g));
            }
        }
        if target || trace.iterations >= config.max_iters {
            break;
        }
        lambda = (lambda * 0.5).max(config.reg);
    }
    if !(f.iter().chain(&g).all(|x| x.is_finite())) {
        return Err(Error::NumericalFailure("non-finite Sinkhorn potentials".into()));
    }

    let mut plan = vec![0.0; rn * cm];
    for i in 0..rn {
        for j in 0..cm {
            let k = i * cm + j;
            plan[k] = (log_a[i] + log_b[j] + (f[i] + g[j] - cbar[k]) / lambda).exp();
        }
    }
    round_to_marginals(&mut plan, &a, &b);
    if eps > 0.0 {
        clear_dummy_pair(&mut plan, &cbar, n, m);
    }

    let mut entries = Vec::new();
    let mut value_p = 0.0;
    let mut removed_a = vec![0.0; n];
    let mut removed_b = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let mass = plan[i * cm + j];
            if mass > 0.0 {
                value_p += mass * c[i * m + j];
                entries.push(PlanEntry { i, j, mass });
            }
        }
        if eps > 0.0 {
            removed_a[i] = plan[i * cm + m];
        }
    }
    if eps > 0.0 {
        for j in 0..m {
            removed_b[j] = plan[n * cm + j];
        }
    }
    let potentials = dual::from_lp_duals(mu, nu, cost, &f[..n], &g[..m], eps, DualForm::Symmetric);
    let solution = TransportSolution {
        value: root(value_p, cost.p),
        value_p,
        plan: entries,
        removed_mu: DiscreteMeasure::merged(mu.dim(), mu.coords(), &removed_a),
        removed_nu: DiscreteMeasure::merged(nu.dim(), nu.coords(), &removed_b),
        potentials: Some(potentials),
        approximate: true,
    };
    if trace.violation > config.tol {
        return Err(Error::NotConverged {
            violation: trace.violation,
            iterations: trace.iterations,
            partial: Box::new(solution),
        });
    }
    Ok((solution, trace))
}

/// `log Σ_k exp(log_w_k + (pot_k − cost_k)/λ)`, stabilized by the max term.
fn lse(cost: &[f64], pot: &[f64], log_w: &[f64], lambda: f64, scratch: &mut [f64]) -> f64 {
    let s = &mut scratch[..cost.len()];
    let mut hi = f64::NEG_INFINITY;
    for k in 0..cost.len() {
        s[k] = log_w[k] + (pot[k] - cost[k]) / lambda;
        hi = hi.max(s[k]);
    }
    hi + s.iter().map(|x| (x - hi).exp()).sum::<f64>().ln()
}

fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

fn transpose(x: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut t = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = x[i * cols + j];
        }
    }
    t
}

/// Scales rows down to at most `a`, columns down to at most `b`, then adds
/// the rank-one correction `err_a err_bᵀ / |err_a|₁`.
fn round_to_marginals(plan: &mut [f64], a: &[f64], b: &[f64]) {
    let (rn, cm) = (a.len(), b.len());
    for i in 0..rn {
        let row = &mut plan[i * cm..(i + 1) * cm];
        let s: f64 = row.iter().sum();
        if s > a[i] {
            let x = a[i] / s;
            row.iter_mut().for_each(|p| *p *= x);
        }
    }
    let mut cols = vec![0.0; cm];
    for i in 0..rn {
        for j in 0..cm {
            cols[j] += plan[i * cm + j];
        }
    }
    for j in 0..cm {
        if cols[j] > b[j] {
            let y = b[j] / cols[j];
            (0..rn).for_each(|i| plan[i * cm + j] *= y);
        }
    }
    let mut err_a = a.to_vec();
    let mut err_b = b.to_vec();
    for i in 0..rn {
        for j in 0..cm {
            err_a[i] -= plan[i * cm + j];
            err_b[j] -= plan[i * cm + j];
        }
    }
    err_a.iter_mut().for_each(|e| *e = e.max(0.0));
    err_b.iter_mut().for_each(|e| *e = e.max(0.0));
    let total: f64 = err_a.iter().sum();
    if total > 0.0 {
        for i in 0..rn {
            for j in 0..cm {
                plan[i * cm + j] += err_a[i] * err_b[j] / total;
            }
        }
    }
}

/// Moves mass off the dummy pair: each unit taken from a real entry (i, j)
/// goes to (i, dummy) and (dummy, j), which preserves all marginals and
/// lowers the real cost. Costliest entries are drained first.
fn clear_dummy_pair(plan: &mut [f64], cbar: &[f64], n: usize, m: usize) {
    let cm = m + 1;
    let dd = n * cm + m;
    let mut order: Vec<usize> = (0..n).flat_map(|i| (0..m).map(move |j| i * cm + j)).collect();
    order.sort_by(|&x, &y| cbar[y].total_cmp(&cbar[x]).then(x.cmp(&y)));
    for k in order {
        if plan[dd] <= 0.0 {
            break;
        }
        let delta = plan[k].min(plan[dd]);
        if delta <= 0.0 {
            continue;
        }
        let (i, j) = (k / cm, k % cm);
        plan[k] -= delta;
        plan[i * cm + m] += delta;
        plan[n * cm + j] += delta;
        plan[dd] -= delta;
    }
    plan[dd] = 0.0;
}
