//! Average- and max-sliced (robust) Wasserstein distances over k-frames.
//!
//! A frame is a d×k matrix U with orthonormal columns; the projected measure
//! is the pushforward under `x ↦ Uᵀx`. The average-sliced distance is the
//! p-th root of the Haar mean of the projected `value_p`, estimated by Monte
//! Carlo. The max-sliced distance is a supremum over frames, approximated by
//! restarted ascent on the Stiefel manifold.
//!
//! Frame `i` of a run is drawn from a ChaCha stream keyed by `(seed, i)`, and
//! per-frame results are collected by index before any reduction, so the
//! output does not depend on the rayon thread count.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::{solve_robust, RobustProblem, TransportSolution};
use crate::measures::{point_key, DiscreteMeasure, GroundCost};
use crate::sinkhorn::{solve_robust_entropic, SinkhornConfig};

/// Orthonormality tolerance for user-supplied frames.
pub const FRAME_TOL: f64 = 1e-10;

/// A d×k matrix with orthonormal columns.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionFrame {
    u: DMatrix<f64>,
}

impl ProjectionFrame {
    pub fn new(u: DMatrix<f64>) -> Result<Self> {
        if u.ncols() == 0 || u.ncols() > u.nrows() {
            return Err(Error::InvalidDimensions(format!("frame shape {}x{}", u.nrows(), u.ncols())));
        }
        let frame = Self { u };
        let err = frame.orthonormality_error();
        if err.is_nan() || err > FRAME_TOL {
            return Err(Error::InvalidInput(format!("frame columns are not orthonormal (error {err:e})")));
        }
        Ok(frame)
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new(DMatrix::identity(d, d))
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.u
    }

    pub fn ambient_dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn k(&self) -> usize {
        self.u.ncols()
    }

    /// `max |UᵀU − I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let g = self.u.transpose() * &self.u;
        let k = self.k();
        (g - DMatrix::<f64>::identity(k, k)).amax()
    }

    /// `Uᵀx` written into `out`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.u.column(c).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

/// Q factor of a thin QR with the signs of R's diagonal made positive.
fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for c in 0..q.ncols() {
        if r[(c, c)] < 0.0 {
            q.column_mut(c).neg_mut();
        }
    }
    q
}

fn haar_frame(d: usize, k: usize, rng: &mut ChaCha8Rng) -> ProjectionFrame {
    let g = DMatrix::from_fn(d, k, |_, _| rng.sample::<f64, _>(StandardNormal));
    ProjectionFrame { u: orthonormalize(g) }
}

fn check_shape(d: usize, k: usize) -> Result<()> {
    if k == 0 || k > d {
        return Err(Error::InvalidDimensions(format!("need 1 <= k <= d, got k = {k}, d = {d}")));
    }
    Ok(())
}

fn frame_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// A Haar-distributed frame, deterministic in `seed`.
pub fn sample_frame(d: usize, k: usize, seed: u64) -> Result<ProjectionFrame> {
    check_shape(d, k)?;
    Ok(haar_frame(d, k, &mut frame_rng(seed, 0)))
}

/// `count` Haar frames; frame `i` depends only on `(seed, i)`.
pub fn sample_frames(d: usize, k: usize, count: usize, seed: u64) -> Result<Vec<ProjectionFrame>> {
    check_shape(d, k)?;
    Ok((0..count)
        .into_par_iter()
        .map(|i| haar_frame(d, k, &mut frame_rng(seed, i as u64)))
        .collect())
}

/// Pushforward of `measure` under `x ↦ Uᵀx` (coincident images are merged).
pub fn project(measure: &DiscreteMeasure, frame: &ProjectionFrame) -> Result<DiscreteMeasure> {
    if measure.dim() != frame.ambient_dim() {
        return Err(Error::InvalidDimensions(format!(
            "measure in dimension {} but frame is {}x{}",
            measure.dim(),
            frame.ambient_dim(),
            frame.k()
        )));
    }
    Ok(measure.pushforward(frame.k(), |x, out| frame.apply(x, out)))
}

/// Projected measure plus, for each projected atom, the weighted mean of the
/// original atoms that landed on it (needed for frame gradients).
fn project_with_means(measure: &DiscreteMeasure, frame: &ProjectionFrame) -> (DiscreteMeasure, Vec<f64>) {
    let projected = measure.pushforward(frame.k(), |x, out| frame.apply(x, out));
    let index: HashMap<Vec<u64>, usize> =
        projected.points().enumerate().map(|(i, p)| (point_key(p), i)).collect();
    let d = measure.dim();
    let mut means = vec![0.0; projected.len() * d];
    let mut buf = vec![0.0; frame.k()];
    for (x, &w) in measure.points().zip(measure.weights()) {
        frame.apply(x, &mut buf);
        let i = index[&point_key(&buf)];
        for (m, xi) in means[i * d..(i + 1) * d].iter_mut().zip(x) {
            *m += w * xi;
        }
    }
    for (i, &w) in projected.weights().iter().enumerate() {
        means[i * d..(i + 1) * d].iter_mut().for_each(|m| *m /= w);
    }
    (projected, means)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SliceMode {
    Average,
    Max,
}

/// Solver used for each projected problem.
#[derive(Clone, Debug, Default)]
pub enum SliceEngine {
    #[default]
    Exact,
    Sinkhorn(SinkhornConfig),
}

#[derive(Clone, Debug)]
pub struct SlicedConfig {
    pub mode: SliceMode,
    pub k: usize,
    /// Monte Carlo frames (average mode).
    pub num_projections: usize,
    /// Random starts of the ascent (max mode).
    pub restarts: usize,
    pub steps: usize,
    pub step: f64,
    pub seed: u64,
    pub engine: SliceEngine,
    /// Extra ascent starting points (max mode); the result is never worse
    /// than any of them.
    pub initial_frames: Vec<ProjectionFrame>,
}

impl SlicedConfig {
    pub fn average(k: usize, num_projections: usize, seed: u64) -> Self {
        Self { mode: SliceMode::Average, num_projections, ..Self::max(k, seed) }
    }

    pub fn max(k: usize, seed: u64) -> Self {
        Self {
            mode: SliceMode::Max,
            k,
            num_projections: 0,
            restarts: 20,
            steps: 100,
            step: 0.1,
            seed,
            engine: SliceEngine::Exact,
            initial_frames: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SlicedEstimate {
    pub value: f64,
    pub value_p: f64,
    /// Monte Carlo standard error of `value` (delta method; 0 in max mode).
    pub std_error: f64,
    /// Monte Carlo standard error of `value_p`.
    pub std_error_p: f64,
    pub num_projections: usize,
    pub seed: u64,
    /// The arg-max frame in max mode.
    pub frames: Option<Vec<ProjectionFrame>>,
}

fn solve_projected(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    cost: GroundCost,
    eps: f64,
    engine: &SliceEngine,
) -> Result<TransportSolution> {
    let problem = RobustProblem::symmetric(mu.clone(), nu.clone(), cost, eps);
    match engine {
        SliceEngine::Exact => solve_robust(&problem),
        SliceEngine::Sinkhorn(cfg) => solve_robust_entropic(&problem, cfg),
    }
}

/// Projected robust `value_p` on each frame, in frame order.
pub fn frame_values(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    eps: f64,
    frames: &[ProjectionFrame],
    engine: &SliceEngine,
) -> Result<Vec<f64>> {
    let cost = GroundCost::euclidean(p)?;
    frames
        .par_iter()
        .map(|f| solve_projected(&project(mu, f)?, &project(nu, f)?, cost, eps, engine).map(|s| s.value_p))
        .collect()
}

/// Average- or max-sliced W_p^ε (ε = 0 gives the plain sliced distances).
pub fn sliced_distance(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    eps: f64,
    config: &SlicedConfig,
) -> Result<SlicedEstimate> {
    crate::error::check_radius(eps)?;
    crate::exact::check_pair(mu, nu)?;
    check_shape(mu.dim(), config.k)?;
    GroundCost::euclidean(p)?;
    match config.mode {
        SliceMode::Average => average(mu, nu, p, eps, config),
        SliceMode::Max => max_sliced(mu, nu, p, eps, config),
    }
}

fn average(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, eps: f64, config: &SlicedConfig) -> Result<SlicedEstimate> {
    let n = config.num_projections;
    if n == 0 {
        return Err(Error::InvalidInput("num_projections must be positive".into()));
    }
    let frames = sample_frames(mu.dim(), config.k, n, config.seed)?;
    let values = frame_values(mu, nu, p, eps, &frames, &config.engine)?;
    let (mean, se_p) = mean_and_se(&values);
    let value = crate::exact::root(mean, p);
    // d/dm m^(1/p) = m^(1/p − 1) / p
    let std_error = if mean > 0.0 { se_p * value / (p * mean) } else { 0.0 };
    Ok(SlicedEstimate {
        value,
        value_p: mean,
        std_error,
        std_error_p: se_p,
        num_projections: n,
        seed: config.seed,
        frames: None,
    })
}

/// Sample mean and its standard error, summed in index order.
pub(crate) fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Projected `value_p` at U and its Danskin gradient with respect to U.
fn value_and_gradient(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    eps: f64,
    frame: &ProjectionFrame,
    engine: &SliceEngine,
) -> Result<(f64, DMatrix<f64>)> {
    let (pm, xm) = project_with_means(mu, frame);
    let (pn, ym) = project_with_means(nu, frame);
    let sol = solve_projected(&pm, &pn, GroundCost::euclidean(p)?, eps, engine)?;
    let (d, k) = (frame.ambient_dim(), frame.k());
    let mut grad = DMatrix::zeros(d, k);
    let mut w = vec![0.0; k];
    for e in &sol.plan {
        let z: Vec<f64> = xm[e.i * d..(e.i + 1) * d].iter().zip(&ym[e.j * d..(e.j + 1) * d]).map(|(a, b)| a - b).collect();
        for (c, wc) in w.iter_mut().enumerate() {
            *wc = pm.point(e.i)[c] - pn.point(e.j)[c];
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        // ∇_U ‖Uᵀz‖^p = p ‖w‖^(p−2) z wᵀ
        let scale = e.mass * p * norm.powf(p - 2.0);
        for c in 0..k {
            for r in 0..d {
                grad[(r, c)] += scale * z[r] * w[c];
            }
        }
    }
    Ok((sol.value_p, grad))
}

fn ascend(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    eps: f64,
    start: ProjectionFrame,
    config: &SlicedConfig,
) -> Result<(f64, ProjectionFrame)> {
    let mut frame = start;
    let (mut val, mut grad) = value_and_gradient(mu, nu, p, eps, &frame, &config.engine)?;
    let mut step = config.step;
    for _ in 0..config.steps {
        let gnorm = grad.norm();
        if gnorm == 0.0 || step < 1e-12 {
            break;
        }
        let cand = ProjectionFrame { u: orthonormalize(frame.matrix() + &grad * (step / gnorm)) };
        let (cv, cg) = value_and_gradient(mu, nu, p, eps, &cand, &config.engine)?;
        if cv > val {
            frame = cand;
            val = cv;
            grad = cg;
        } else {
            step *= 0.5;
        }
    }
    Ok((val, frame))
}

fn max_sliced(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64, eps: f64, config: &SlicedConfig) -> Result<SlicedEstimate> {
    let (d, k) = (mu.dim(), config.k);
    if let Some(f) = config.initial_frames.iter().find(|f| f.ambient_dim() != d || f.k() != k) {
        return Err(Error::InvalidDimensions(format!("initial frame is {}x{}, expected {d}x{k}", f.ambient_dim(), f.k())));
    }
    let mut starts = config.initial_frames.clone();
    starts.extend(sample_frames(d, k, config.restarts, config.seed)?);
    if starts.is_empty() {
        return Err(Error::InvalidInput("max mode needs at least one restart".into()));
    }
    let results: Vec<(f64, ProjectionFrame)> = starts
        .into_par_iter()
        .map(|s| ascend(mu, nu, p, eps, s, config))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.0 > results[best].0 {
            best = i;
        }
    }
    let n = results.len();
    let (value_p, frame) = results.into_iter().nth(best).expect("nonempty");
    Ok(SlicedEstimate {
        value: crate::exact::root(value_p, p),
        value_p,
        std_error: 0.0,
        std_error_p: 0.0,
        num_projections: n,
        seed: config.seed,
        frames: Some(vec![frame]),
    })
}

/// Slack `rhs − lhs` of the sliced approximate triangle inequality
/// `S^{ε1+ε2}(μ, ν) ≤ S^{ε1}(μ, κ) + S^{ε2}(κ, ν)`, evaluated on one shared
/// frame set. Negative slack is a violation.
#[derive(Clone, Debug)]
pub struct TriangleReport {
    /// Average-sliced slack.
    pub average_slack: f64,
    /// Slack of the maxima over the shared frames.
    pub max_slack: f64,
    /// Smallest per-frame slack.
    pub min_frame_slack: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn sliced_triangle_check(
    mu: &DiscreteMeasure,
    kappa: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    k: usize,
    eps1: f64,
    eps2: f64,
    config: &SlicedConfig,
) -> Result<TriangleReport> {
    crate::error::check_radius(eps1 + eps2)?;
    let frames = sample_frames(mu.dim(), k, config.num_projections.max(1), config.seed)?;
    let lhs = frame_values(mu, nu, p, eps1 + eps2, &frames, &config.engine)?;
    let a = frame_values(mu, kappa, p, eps1, &frames, &config.engine)?;
    let b = frame_values(kappa, nu, p, eps2, &frames, &config.engine)?;
    let r = |x: f64| crate::exact::root(x, p);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let maxv = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let min_frame_slack = (0..frames.len())
        .map(|i| r(a[i]) + r(b[i]) - r(lhs[i]))
        .fold(f64::INFINITY, f64::min);
    Ok(TriangleReport {
        average_slack: r(mean(&a)) + r(mean(&b)) - r(mean(&lhs)),
        max_slack: r(maxv(&a)) + r(maxv(&b)) - r(maxv(&lhs)),
        min_frame_slack,
    })
}
