//! `rwp`: command-line front end for robust Wasserstein distances.
//!
//! Results go to stdout (or `--output`) as JSON, except `sweep`, which
//! writes a `tau,value_p,slope` CSV by default. Floats are printed in
//! shortest round-trip form. Exit codes: 0 success, 1 solver error,
//! 2 usage or input error.

pub mod bench;
pub mod fixtures;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use robust_wasserstein::dual::{dual_ascent, AscentConfig};
use robust_wasserstein::estimation::{
    detect_elbow, independence_test, mde, radius_grid, robust_distance_certificate, sweep_radius, two_sample_test,
    CandidateFamily, IndependenceConfig, ResilienceProfile, PRODUCT_CAP,
};
use robust_wasserstein::exact::{one_sided, solve_asymmetric, solve_robust};
use robust_wasserstein::io::{read_measure, read_points};
use robust_wasserstein::sinkhorn::{solve_robust_entropic, SinkhornConfig};
use robust_wasserstein::sliced::{sliced_distance, SliceMode, SlicedConfig};
use robust_wasserstein::{DiscreteMeasure, Error, GroundCost, RobustProblem, TransportSolution};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) => 2,
            Self::Solver(_) => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(name = "rwp", version, about = "Outlier-robust Wasserstein distances")]
pub struct CliConfig {
    #[command(subcommand)]
    pub command: Command,

    /// Seed for all randomness.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,

    /// Write the result here instead of stdout.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Exact,
    Sinkhorn,
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SlicedMode {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Args)]
pub struct Pair {
    /// First measure (.json or .csv).
    pub a: PathBuf,
    /// Second measure.
    pub b: PathBuf,
    /// Cost exponent.
    #[arg(long, default_value_t = 1.0)]
    pub p: f64,
}

#[derive(Debug, Args)]
pub struct Engine {
    #[arg(long, value_enum, default_value_t = Method::Exact)]
    pub method: Method,
    /// Entropic regularization (cost units) for `--method sinkhorn`.
    #[arg(long, default_value_t = 0.01)]
    pub reg: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iters: usize,
    /// Include the sparse plan in the output.
    #[arg(long)]
    pub plan: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classic W_p.
    Dist {
        #[command(flatten)]
        pair: Pair,
        #[command(flatten)]
        engine: Engine,
    },
    /// Robust W_p^ε (symmetric, asymmetric or one-sided).
    Robust {
        #[command(flatten)]
        pair: Pair,
        #[command(flatten)]
        engine: Engine,
        #[arg(long, conflicts_with_all = ["eps_mu", "eps_nu"])]
        eps: Option<f64>,
        #[arg(long, requires = "eps_nu")]
        eps_mu: Option<f64>,
        #[arg(long, requires = "eps_mu")]
        eps_nu: Option<f64>,
        /// Only the first measure is trimmed.
        #[arg(long, conflicts_with_all = ["eps_mu", "eps_nu"])]
        one_sided: bool,
        /// Moment scale of the clean measures; adds a certificate.
        #[arg(long, requires = "q")]
        sigma: Option<f64>,
        /// Moment order for the certificate (q > p).
        #[arg(long, requires = "sigma")]
        q: Option<f64>,
    },
    /// W_p^τ(μ, ν)^p over a grid of radii.
    Sweep {
        #[command(flatten)]
        pair: Pair,
        /// Radius grid `start:end:step`.
        #[arg(long)]
        grid: String,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        /// Slope threshold for the elbow (JSON output only).
        #[arg(long, allow_negative_numbers = true)]
        threshold: Option<f64>,
    },
    /// Minimum-distance estimate over a candidate family.
    Mde {
        /// Contaminated data.
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        eps: f64,
        /// Accept any member within this of the minimum.
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
        #[arg(long)]
        one_sided: bool,
        /// Explicit candidate files.
        #[arg(long, num_args = 1.., conflicts_with_all = ["location", "gaussian"])]
        candidates: Vec<PathBuf>,
        /// Location family: translates of this template over `--grid`.
        #[arg(long, conflicts_with = "gaussian", requires = "grid")]
        location: Option<PathBuf>,
        /// Gaussian family over `--sigmas` × `--grid` means.
        #[arg(long, requires_all = ["grid", "sigmas"])]
        gaussian: bool,
        /// Per-coordinate grid `start:end:step` for shifts or means.
        #[arg(long, allow_hyphen_values = true)]
        grid: Option<String>,
        #[arg(long)]
        sigmas: Option<String>,
        /// Sample size discretizing each Gaussian.
        #[arg(long, default_value_t = 200)]
        samples: usize,
    },
    /// Robust two-sample test.
    Test2s {
        #[command(flatten)]
        pair: Pair,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        rho: f64,
    },
    /// Robust independence test on paired samples (x, y) stored as rows.
    Testindep {
        pairs: PathBuf,
        /// Number of leading coordinates forming x.
        #[arg(long)]
        split: usize,
        #[arg(long, default_value_t = 1.0)]
        p: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        rho: f64,
        #[arg(long, default_value_t = PRODUCT_CAP)]
        cap: usize,
        /// Subsample an oversized product with `--seed` instead of failing.
        #[arg(long)]
        subsample: bool,
    },
    /// Average- or max-sliced (robust) distance.
    Sliced {
        #[command(flatten)]
        pair: Pair,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, value_enum, default_value_t = SlicedMode::Avg)]
        sliced: SlicedMode,
        #[arg(long, default_value_t = 1)]
        k: usize,
        #[arg(long, default_value_t = 100)]
        projections: usize,
        #[arg(long, default_value_t = 20)]
        restarts: usize,
    },
    /// Run fixture suites and print a pass/fail table.
    Bench {
        /// Suites to run (default: all).
        #[arg(long, num_args = 1..)]
        suite: Vec<String>,
    },
}

/// Runs a parsed command and returns the text to emit.
pub fn run(config: &CliConfig) -> CliResult<String> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads)
        .build()
        .map_err(|e| usage(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(config))
}

/// Runs and writes the output; returns the process exit code.
pub fn main_with(config: &CliConfig) -> u8 {
    let result = run(config).and_then(|text| match &config.output {
        Some(path) => std::fs::write(path, &text).map_err(|e| usage(format!("{}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(path: &Path) -> CliResult<DiscreteMeasure> {
    let m = read_measure(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    m.require_probability().map_err(|e| usage(format!("{}: {e}", path.display())))?;
    Ok(m)
}

fn radius(name: &str, v: f64) -> CliResult<f64> {
    if v.is_finite() && (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(usage(format!("--{name} must lie in [0, 1), got {v}")))
    }
}

fn cost(p: f64) -> CliResult<GroundCost> {
    GroundCost::euclidean(p).map_err(|e| usage(e.to_string()))
}

fn grid(spec: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let nums: Option<Vec<f64>> = parts.iter().map(|s| s.trim().parse().ok()).collect();
    match nums.as_deref() {
        Some([a, b, step]) => radius_grid(*a, *b, *step).map_err(|e| usage(e.to_string())),
        _ => Err(usage(format!("grid must be start:end:step, got `{spec}`"))),
    }
}

fn to_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json values serialize");
    s.push('\n');
    s
}

fn measure_summary(m: &DiscreteMeasure) -> Value {
    json!({ "mass": m.mass(), "atoms": m.len() })
}

fn solution_json(sol: &TransportSolution, method: Method, with_plan: bool) -> Value {
    let mut v = json!({
        "value": sol.value,
        "value_p": sol.value_p,
        "method": format!("{method:?}").to_lowercase(),
        "approximate": sol.approximate,
        "removed_mu": measure_summary(&sol.removed_mu),
        "removed_nu": measure_summary(&sol.removed_nu),
    });
    if let Some(pot) = &sol.potentials {
        v["dual_objective"] = json!(pot.objective);
    }
    if with_plan {
        v["plan"] = serde_json::to_value(&sol.plan).expect("plan serializes");
    }
    v
}

fn solve_symmetric(problem: &RobustProblem, engine: &Engine, seed: u64) -> CliResult<Value> {
    match engine.method {
        Method::Exact => Ok(solution_json(&solve_robust(problem)?, engine.method, engine.plan)),
        Method::Sinkhorn => {
            let cfg = SinkhornConfig { reg: engine.reg, max_iters: engine.max_iters, ..SinkhornConfig::default() };
            Ok(solution_json(&solve_robust_entropic(problem, &cfg)?, engine.method, engine.plan))
        }
        Method::Dual => {
            if engine.plan {
                return Err(usage("--plan is not available with --method dual"));
            }
            let pot = dual_ascent(problem, &AscentConfig { seed, ..AscentConfig::default() })?;
            let value = if problem.cost.p == 1.0 { pot.objective.max(0.0) } else { pot.objective.max(0.0).powf(1.0 / problem.cost.p) };
            Ok(json!({ "value": value, "value_p": pot.objective, "method": "dual", "approximate": true }))
        }
    }
}

fn dispatch(config: &CliConfig) -> CliResult<String> {
    let seed = config.seed;
    match &config.command {
        Command::Dist { pair, engine } => {
            let (mu, nu, c) = (load(&pair.a)?, load(&pair.b)?, cost(pair.p)?);
            Ok(to_string(&solve_symmetric(&RobustProblem::symmetric(mu, nu, c, 0.0), engine, seed)?))
        }
        Command::Robust { pair, engine, eps, eps_mu, eps_nu, one_sided: os, sigma, q } => {
            let (mu, nu, c) = (load(&pair.a)?, load(&pair.b)?, cost(pair.p)?);
            let mut out = if let (Some(e1), Some(e2)) = (eps_mu, eps_nu) {
                let (e1, e2) = (radius("eps-mu", *e1)?, radius("eps-nu", *e2)?);
                if engine.method != Method::Exact {
                    return Err(usage("asymmetric radii require --method exact"));
                }
                let sol = solve_asymmetric(&RobustProblem { mu: mu.clone(), nu: nu.clone(), cost: c, eps_mu: e1, eps_nu: e2 })?;
                let mut v = solution_json(&sol, engine.method, engine.plan);
                v["eps_mu"] = json!(e1);
                v["eps_nu"] = json!(e2);
                v
            } else {
                let e = radius("eps", eps.ok_or_else(|| usage("either --eps or --eps-mu/--eps-nu is required"))?)?;
                let mut v = if *os {
                    if engine.method != Method::Exact {
                        return Err(usage("--one-sided requires --method exact"));
                    }
                    solution_json(&one_sided(&mu, &nu, &c, e)?, engine.method, engine.plan)
                } else {
                    solve_symmetric(&RobustProblem::symmetric(mu.clone(), nu.clone(), c, e), engine, seed)?
                };
                v["eps"] = json!(e);
                v
            };
            if let (Some(s), Some(q)) = (sigma, q) {
                let e = eps.ok_or_else(|| usage("a certificate needs a symmetric --eps"))?;
                let profile = ResilienceProfile::new(*s, *q, pair.p).map_err(|e| usage(e.to_string()))?;
                let cert = robust_distance_certificate(&mu, &nu, c, e, &profile)?;
                out["certificate"] = serde_json::to_value(&cert).expect("certificate serializes");
            }
            Ok(to_string(&out))
        }
        Command::Sweep { pair, grid: g, format, threshold } => {
            let (mu, nu, c) = (load(&pair.a)?, load(&pair.b)?, cost(pair.p)?);
            let taus = grid(g)?;
            if let Some(t) = taus.iter().find(|t| !(0.0..1.0).contains(*t)) {
                return Err(usage(format!("grid radius {t} outside [0, 1)")));
            }
            let curve = sweep_radius(&mu, &nu, c, &taus)?;
            match format {
                Format::Csv => {
                    let mut s = String::from("tau,value_p,slope\n");
                    for (i, (t, v)) in curve.taus.iter().zip(&curve.values_p).enumerate() {
                        match curve.slopes.get(i) {
                            Some(sl) => s.push_str(&format!("{t},{v},{sl}\n")),
                            None => s.push_str(&format!("{t},{v},\n")),
                        }
                    }
                    Ok(s)
                }
                Format::Json => {
                    let mut v = serde_json::to_value(&curve).expect("curve serializes");
                    v["elbow"] = match detect_elbow(&curve, *threshold) {
                        Ok(r) => serde_json::to_value(&r).expect("report serializes"),
                        Err(e) => json!({ "error": e.to_string() }),
                    };
                    Ok(to_string(&v))
                }
            }
        }
        Command::Mde { data, p, eps, delta, one_sided: os, candidates, location, gaussian, grid: g, sigmas, samples } => {
            let mu = load(data)?;
            let c = cost(*p)?;
            let e = radius("eps", *eps)?;
            let axes = |spec: &Option<String>| -> CliResult<Vec<Vec<f64>>> {
                let axis = grid(spec.as_deref().ok_or_else(|| usage("--grid is required"))?)?;
                Ok(cartesian(&axis, mu.dim()))
            };
            let family = if let Some(t) = location {
                CandidateFamily::Location { template: load(t)?, thetas: axes(g)? }
            } else if *gaussian {
                let sig = grid(sigmas.as_deref().unwrap_or_default())?;
                CandidateFamily::Gaussian { sigmas: sig, means: axes(g)?, samples: *samples, seed }
            } else if !candidates.is_empty() {
                CandidateFamily::List(candidates.iter().map(|f| load(f)).collect::<CliResult<_>>()?)
            } else {
                return Err(usage("one of --candidates, --location or --gaussian is required"));
            };
            let res = mde(&mu, &family, c, e, *delta, *os)?;
            Ok(to_string(&json!({
                "index": res.index,
                "params": res.params,
                "value": res.value,
                "values": res.values,
                "family_size": family.len(),
            })))
        }
        Command::Test2s { pair, eps, rho } => {
            let (mu, nu, c) = (load(&pair.a)?, load(&pair.b)?, cost(pair.p)?);
            let cert = two_sample_test(&mu, &nu, c, radius("eps", *eps)?, *rho)?;
            Ok(to_string(&serde_json::to_value(&cert).expect("certificate serializes")))
        }
        Command::Testindep { pairs, split, p, eps, rho, cap, subsample } => {
            let rows = read_points(pairs).map_err(|e| usage(format!("{}: {e}", pairs.display())))?;
            let d = rows[0].len();
            if *split == 0 || *split >= d {
                return Err(usage(format!("--split must lie in 1..{d}")));
            }
            let pairs: Vec<(Vec<f64>, Vec<f64>)> = rows.iter().map(|r| (r[..*split].to_vec(), r[*split..].to_vec())).collect();
            let cfg = IndependenceConfig { cap: *cap, subsample_seed: subsample.then_some(seed) };
            let cert = independence_test(&pairs, *p, radius("eps", *eps)?, *rho, &cfg)?;
            Ok(to_string(&serde_json::to_value(&cert).expect("certificate serializes")))
        }
        Command::Sliced { pair, eps, sliced, k, projections, restarts } => {
            let (mu, nu) = (load(&pair.a)?, load(&pair.b)?);
            cost(pair.p)?;
            let e = radius("eps", *eps)?;
            let cfg = match sliced {
                SlicedMode::Avg => SlicedConfig::average(*k, *projections, seed),
                SlicedMode::Max => SlicedConfig { restarts: *restarts, ..SlicedConfig::max(*k, seed) },
            };
            let est = sliced_distance(&mu, &nu, pair.p, e, &cfg)?;
            let mut v = json!({
                "mode": if cfg.mode == SliceMode::Average { "avg" } else { "max" },
                "value": est.value,
                "value_p": est.value_p,
                "std_error": est.std_error,
                "std_error_p": est.std_error_p,
                "num_projections": est.num_projections,
                "seed": est.seed,
            });
            if let Some(f) = est.frames.as_ref().and_then(|f| f.first()) {
                let m = f.matrix();
                let rows: Vec<Vec<f64>> = (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect();
                v["frame"] = json!(rows);
            }
            Ok(to_string(&v))
        }
        Command::Bench { suite } => {
            let names: Vec<&str> = if suite.is_empty() { bench::SUITES.to_vec() } else { suite.iter().map(String::as_str).collect() };
            if let Some(bad) = names.iter().find(|n| !bench::SUITES.contains(n)) {
                return Err(usage(format!("unknown suite `{bad}` (known: {})", bench::SUITES.join(", "))));
            }
            let mut s = format!("{:<16}{:>10}{:>14}{:>14}  status\n", "suite", "instances", "worst", "tolerance");
            let mut all = true;
            for name in names {
                let r = bench::run_suite(name, seed)?;
                all &= r.passed();
                let status = if r.passed() { "pass" } else { "FAIL" };
                s.push_str(&format!("{:<16}{:>10}{:>14.3e}{:>14.3e}  {status}\n", r.name, r.instances, r.worst, r.tolerance));
            }
            if !all {
                return Err(CliError::Solver(Error::NumericalFailure(format!("bench suites failed\n{s}"))));
            }
            Ok(s)
        }
    }
}

/// All points of `axis`^d.
fn cartesian(axis: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        assert_eq!(grid("0:0.3:0.1").unwrap(), vec![0.0, 0.1, 0.2, 0.3]);
        assert!(matches!(grid("0:1"), Err(CliError::Usage(_))));
        assert!(matches!(grid("a:b:c"), Err(CliError::Usage(_))));
    }

    #[test]
    fn cartesian_product() {
        let c = cartesian(&[0.0, 1.0], 2);
        assert_eq!(c, vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]);
    }

    #[test]
    fn flags_parse() {
        CliConfig::command_for_tests();
    }

    impl CliConfig {
        fn command_for_tests() {
            use clap::CommandFactory;
            Self::command().debug_assert();
        }
    }
}
