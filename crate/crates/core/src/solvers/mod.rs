//! Solvers for `argmin g(‖Y − Xβ‖²) + Σ_j λ_j ‖M_j β‖_{q_j}` with KKT certificates.

mod admm;
mod cd;
mod fista;
mod kkt;
mod prox;
mod sqrt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vector, Matrix};
use crate::model::{objective, EstimatorSpec, LinkFunction, Problem, Structure};
use crate::real::Real;

pub use kkt::kkt_residual;
pub(crate) use kkt::DEGENERATE_RTOL;
pub use prox::{
    group_soft_threshold, isotonic_nonincreasing, project_l1_ball, project_l2_ball, project_linf_ball,
    project_lp_ball, project_permutahedron, project_sorted_l1_dual_ball, slope_prox, soft_threshold,
};

/// Stopping rules shared by all solvers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Target KKT residual.
    pub tol: f64,
    /// Iteration budget per attempt.
    pub max_iter: usize,
    /// Extra attempts (new coordinate order / starting point) after a non-converged run.
    pub restarts: usize,
    /// Seeds coordinate orders and random starting points; `0` means natural order from zero.
    pub seed: u64,
    /// Forces an algorithm; `None` picks one from the penalty structure.
    /// Under the square-root link this selects the inner solver.
    pub method: Option<Method>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { tol: 1e-8, max_iter: 100_000, restarts: 2, seed: 0, method: None }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidInput(format!("solver tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("solver max_iter must be at least 1".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SolverConfig { seed, ..self.clone() }
    }

    pub fn with_tol(&self, tol: f64) -> Self {
        SolverConfig { tol, ..self.clone() }
    }

    pub fn with_method(&self, method: Method) -> Self {
        SolverConfig { method: Some(method), ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    CoordinateDescent,
    ProximalGradient,
    Admm,
    SquareRootAlternation,
}

/// Solver output. `fitted` is recomputed from `beta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution<T> {
    pub beta: Vec<T>,
    pub fitted: Vec<T>,
    pub objective: T,
    pub kkt_residual: T,
    pub iterations: usize,
    pub converged: bool,
    pub method: Method,
    /// Objective of the reported iterate at each convergence check.
    pub objective_trace: Vec<T>,
}

/// Internal result of one solver attempt.
pub(crate) struct Attempt<T> {
    pub beta: Vec<T>,
    pub kkt: T,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<T>,
}

/// Solves the estimator from a zero (or seeded random) start.
pub fn solve<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>, cfg: &SolverConfig) -> Result<Solution<T>> {
    solve_from(spec, problem, cfg, None)
}

/// Solves with an optional warm start.
///
/// Non-convergence is not an error: the best iterate is returned with
/// `converged = false`.
pub fn solve_from<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Option<&[T]>,
) -> Result<Solution<T>> {
    cfg.validate()?;
    spec.check_problem(problem)?;
    if let Some(b) = init {
        problem.check_beta(b)?;
    }
    let method = method_for(spec, cfg.method);
    if spec.link == LinkFunction::Identity && cfg.method == Some(Method::SquareRootAlternation) {
        return Err(Error::Unsupported("square-root alternation needs the square-root link".into()));
    }
    let mut best: Option<Attempt<T>> = None;
    let mut iterations = 0;
    for attempt in 0..=cfg.restarts {
        let seed = if attempt == 0 { cfg.seed } else { mix_seed(cfg.seed, attempt as u64) };
        let start = match (&best, init) {
            (Some(b), _) => Some(b.beta.clone()),
            (None, Some(b)) => Some(b.to_vec()),
            (None, None) => None,
        };
        let run = run_once(spec, problem, &cfg.with_seed(seed), start)?;
        iterations += run.iterations;
        let done = run.converged;
        let better = best.as_ref().map_or(true, |b| run.kkt <= b.kkt);
        if better {
            let mut trace = best.as_ref().map(|b| b.trace.clone()).unwrap_or_default();
            trace.extend(run.trace.iter().copied());
            best = Some(Attempt { trace, ..run });
        }
        if done {
            break;
        }
    }
    let best = best.expect("at least one attempt runs");
    let fitted = problem.x.matvec(&best.beta);
    let obj = objective(spec, problem, &best.beta)?;
    let trace = best.trace;
    Ok(Solution {
        beta: best.beta,
        fitted,
        objective: obj,
        kkt_residual: best.kkt,
        iterations,
        converged: best.converged,
        method,
        objective_trace: trace,
    })
}

fn method_for<T: Real>(spec: &EstimatorSpec<T>, forced: Option<Method>) -> Method {
    if let (LinkFunction::Identity, Some(m)) = (spec.link, forced) {
        return m;
    }
    match (spec.link, spec.penalty.structure()) {
        (LinkFunction::SquareRoot, _) => Method::SquareRootAlternation,
        (_, Structure::Separable { .. }) => Method::CoordinateDescent,
        (_, Structure::SortedL1) => Method::ProximalGradient,
        (_, Structure::General) => Method::Admm,
    }
}

pub(crate) fn run_once<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Option<Vec<T>>,
) -> Result<Attempt<T>> {
    let init = init.unwrap_or_else(|| starting_point(problem, cfg.seed));
    match spec.link {
        LinkFunction::SquareRoot => sqrt::solve(spec, problem, cfg, init),
        LinkFunction::Identity => identity_solve(spec, problem, cfg, init),
    }
}

pub(crate) fn identity_solve<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Vec<T>,
) -> Result<Attempt<T>> {
    match (cfg.method, spec.penalty.structure()) {
        (None | Some(Method::CoordinateDescent), Structure::Separable { blocks }) => {
            cd::solve(spec, problem, cfg, init, blocks)
        }
        (None | Some(Method::ProximalGradient), Structure::SortedL1) => fista::solve(spec, problem, cfg, init),
        (None, Structure::General) | (Some(Method::Admm), _) => admm::solve(spec, problem, cfg, init),
        (Some(m), _) => Err(Error::Unsupported(format!("method {m:?} does not apply to estimator '{}'", spec.name))),
    }
}

/// Zero for seed 0; otherwise a small random point, so that different seeds
/// exercise different solver paths.
fn starting_point<T: Real>(problem: &Problem<T>, seed: u64) -> Vec<T> {
    let p = problem.p();
    if seed == 0 {
        return vec![T::zero(); p];
    }
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = vector::norm2(&problem.y) / (problem.x.frobenius() + T::epsilon());
    (0..p).map(|_| T::lit(rng.random_range(-1.0..1.0)) * scale).collect()
}

pub(crate) fn permutation(len: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).collect();
    if seed != 0 {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    idx
}

fn mix_seed(seed: u64, attempt: u64) -> u64 {
    // splitmix64 finalizer; never returns 0 for attempt > 0 in practice.
    let mut z = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    (z ^ (z >> 31)).max(1)
}

/// Columns of `X` as contiguous vectors.
pub(crate) fn columns<T: Real>(x: &Matrix<T>) -> Vec<Vec<T>> {
    (0..x.ncols()).map(|j| x.column(j)).collect()
}

/// `‖X‖₂²` by power iteration on `XᵀX` (an estimate from below).
pub(crate) fn spectral_norm_sq<T: Real>(x: &Matrix<T>) -> T {
    let p = x.ncols();
    let mut v: Vec<T> = (0..p).map(|i| T::one() + T::lit(0.01) * T::from_count(i % 7)).collect();
    let mut est = T::zero();
    for _ in 0..100 {
        let nv = vector::norm2(&v);
        if nv == T::zero() {
            return T::zero();
        }
        v = vector::scale(&v, nv.recip());
        let w = x.tr_matvec(&x.matvec(&v));
        let next = vector::dot(&v, &w);
        let conv = (next - est).abs() <= T::lit(1e-10) * next;
        est = next;
        v = w;
        if conv {
            break;
        }
    }
    est
}
