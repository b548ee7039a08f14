//! Square-root link by alternation: for fixed `σ` the problem is the
//! identity-link problem with tuning `2σλ`; `σ` is then driven to the
//! self-consistent value `σ = ‖Y − Xβ̂(σ)‖`.
//!
//! `σ ↦ ‖Y − Xβ̂(σ)‖` is nondecreasing, so `h(σ) = σ − ‖Y − Xβ̂(σ)‖` has a
//! single root; it is located by safeguarded secant steps on a bracket.
//! When the data can be interpolated the residual may shrink in exact
//! proportion to `σ`. The root is then `σ = 0`: the minimizer has zero
//! residual, which the square-root link excludes.

use crate::error::{Error, Result};
use crate::linalg::vector;
use crate::model::{EstimatorSpec, LinkFunction, Problem};
use crate::real::Real;
use crate::solvers::kkt::{penalty_distance, DEGENERATE_RTOL, GENERAL_BUDGET};
use crate::solvers::{identity_solve, Attempt, Method, SolverConfig};

const MAX_OUTER: usize = 300;
/// Relative agreement of `‖Y − Xβ̂(σ)‖ / σ` at two scales that marks the
/// interpolating regime.
const LINEAR_RTOL: f64 = 1e-6;

pub(crate) fn solve<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Vec<T>,
) -> Result<Attempt<T>> {
    let lambdas = spec.penalty.lambdas();
    let mut inner_spec = spec.clone();
    inner_spec.link = LinkFunction::Identity;
    let ny = vector::norm2(&problem.y);
    let floor = T::lit(DEGENERATE_RTOL) * ny;
    let tol = T::lit(cfg.tol);
    let four = T::lit(4.0);

    let mut beta = init;
    let mut sigma = vector::norm2(&problem.residual(&beta));
    if !(sigma > floor) {
        sigma = ny;
    }
    let mut lo: Option<T> = None;
    let mut hi: Option<T> = None;
    let mut prev: Option<(T, T)> = None;
    let mut tighten = T::one();
    let mut iterations = 0;
    let mut trace = Vec::new();
    let mut last_kkt = T::infinity();
    let mut last_ratio: Option<(T, T)> = None;
    for _ in 0..MAX_OUTER {
        let scaled: Vec<T> = lambdas.iter().map(|&l| T::lit(2.0) * sigma * l).collect();
        let sub = inner_spec.with_lambdas(&scaled)?;
        let inner_tol = (tol * sigma * tighten).to_f64_lossy().max(1e-300);
        let inner_cfg = SolverConfig {
            tol: inner_tol,
            max_iter: cfg.max_iter.saturating_sub(iterations).max(1),
            restarts: 0,
            seed: cfg.seed,
            method: cfg.method.filter(|&m| m != Method::SquareRootAlternation),
        };
        let att = identity_solve(&sub, problem, &inner_cfg, beta)?;
        iterations += att.iterations;
        beta = att.beta;
        let r = problem.residual(&beta);
        let f = vector::norm2(&r);
        if f <= floor {
            return Err(Error::Degenerate(format!(
                "residual norm {f} vanished at scale σ = {sigma}; the square-root link needs Y − Xβ̂ ≠ 0"
            )));
        }
        let g = vector::scale(&problem.x.tr_matvec(&r), -f.recip());
        let kkt = penalty_distance(&spec.penalty, &beta, &g, GENERAL_BUDGET);
        last_kkt = kkt;
        trace.push(f + spec.penalty.value(&beta));
        if kkt <= tol {
            return Ok(Attempt { beta, kkt, iterations, converged: true, trace });
        }
        if iterations >= cfg.max_iter {
            break;
        }
        let h = sigma - f;
        let ratio = f / sigma;
        if let Some((ps, pr)) = last_ratio {
            if h > T::zero() && sigma < ps && (ratio - pr).abs() <= T::lit(LINEAR_RTOL) * pr {
                return Err(Error::Degenerate(format!(
                    "the square-root fit interpolates the data: ‖Y − Xβ̂(σ)‖ = {}·σ at σ = {sigma} and σ = {ps}, \
                     so the minimizer has zero residual; the square-root link needs Y − Xβ̂ ≠ 0",
                    ratio.to_f64_lossy()
                )));
            }
        }
        last_ratio = Some((sigma, ratio));
        if h.abs() <= four * T::epsilon() * sigma {
            // σ is self-consistent to rounding: only a tighter inner solve can help.
            tighten = tighten * T::lit(0.1);
            if tighten < T::lit(1e-8) {
                break;
            }
            continue;
        }
        if h < T::zero() {
            lo = Some(lo.map_or(sigma, |l: T| l.max(sigma)));
        } else {
            hi = Some(hi.map_or(sigma, |u: T| u.min(sigma)));
        }
        let mut next = f;
        if let Some((sp, hp)) = prev {
            if hp != h {
                let s = sigma - h * (sigma - sp) / (h - hp);
                if s.is_finite() && s > T::zero() {
                    next = s;
                }
            }
        }
        next = match (lo, hi) {
            (Some(a), Some(b)) => {
                if next > a && next < b {
                    next
                } else {
                    (a + b) * T::lit(0.5)
                }
            }
            // Above the root: the root lies below f.
            (None, Some(_)) => next.min(f).max(f / four),
            // Below the root: the root lies above f.
            (Some(_), None) => next.max(f).min(f * four),
            (None, None) => f,
        };
        prev = Some((sigma, h));
        sigma = next;
    }
    Ok(Attempt { beta, kkt: last_kkt, iterations, converged: false, trace })
}
