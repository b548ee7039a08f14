//! Monotone accelerated proximal gradient for the sorted-ℓ1 penalty, with cluster polishing.

use crate::error::Result;
use crate::linalg::{cholesky, cholesky_solve, vector, Matrix};
use crate::model::{EstimatorSpec, Problem, TermNorm};
use crate::real::Real;
use crate::solvers::kkt::penalty_distance;
use crate::solvers::prox::{order_by_magnitude, slope_prox_unchecked};
use crate::solvers::{spectral_norm_sq, Attempt, SolverConfig};

/// Iterations between convergence checks.
const CHECK_EVERY: usize = 10;

/// Relative magnitude gaps below which polishing merges entries into one cluster.
const CLUSTER_GAPS: [f64; 4] = [0.0, 1e-9, 1e-6, 1e-4];

/// Least squares on the cluster structure of `x`: magnitudes within `gap`
/// (relative to the largest) share one free parameter, and entries below it
/// are zero. Returns `None` if the solution does not reproduce the structure.
fn polish<T: Real>(problem: &Problem<T>, x: &[T], weights: &[T], lambda: T, gap: T) -> Option<Vec<T>> {
    let order = order_by_magnitude(x);
    let cut = gap * vector::max_abs(x);
    let mut clusters: Vec<(Vec<usize>, T)> = Vec::new();
    let mut k = 0;
    while k < order.len() && x[order[k]].abs() > cut {
        let mut end = k + 1;
        while end < order.len() && x[order[end - 1]].abs() - x[order[end]].abs() <= cut && x[order[end]].abs() > cut {
            end += 1;
        }
        let w: T = weights[k..end].iter().copied().sum();
        clusters.push((order[k..end].to_vec(), w));
        k = end;
    }
    if clusters.is_empty() {
        return None;
    }
    let n = problem.rows();
    let kc = clusters.len();
    let z = Matrix::from_fn(n, kc, |i, c| {
        clusters[c].0.iter().map(|&j| problem.x[(i, j)] * x[j].signum()).sum()
    });
    let ztz = z.gram();
    let zty = z.tr_matvec(&problem.y);
    let rhs: Vec<T> = zty.iter().zip(&clusters).map(|(&a, (_, w))| a - lambda * *w * T::lit(0.5)).collect();
    let l = cholesky(&ztz).ok()?;
    let theta = cholesky_solve(&l, &rhs);
    if theta.iter().any(|t| !(*t > T::zero())) || theta.windows(2).any(|p| !(p[0] > p[1])) {
        return None;
    }
    let mut out = vec![T::zero(); x.len()];
    for ((idx, _), &t) in clusters.iter().zip(&theta) {
        for &j in idx {
            out[j] = t * x[j].signum();
        }
    }
    Some(out)
}

pub(crate) fn solve<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Vec<T>,
) -> Result<Attempt<T>> {
    let term = &spec.penalty.terms()[0];
    let TermNorm::SortedL1(weights) = &term.norm else {
        unreachable!("dispatch guarantees a sorted-l1 term")
    };
    let lambda = term.lambda;
    let x_mat = &problem.x;
    let two = T::lit(2.0);
    let smooth = |b: &[T]| vector::norm2_sq(&problem.residual(b));
    let total = |b: &[T]| smooth(b) + spec.penalty.value(b);
    let grad = |b: &[T]| vector::scale(&x_mat.tr_matvec(&problem.residual(b)), -two);
    let tol = T::lit(cfg.tol);

    let mut lip = two * spectral_norm_sq(x_mat) * T::lit(1.01);
    if lip <= T::zero() {
        lip = T::one();
    }
    let mut x = init;
    let mut fx = total(&x);
    let mut y = x.clone();
    let mut t = T::one();
    let mut trace = vec![fx];
    let mut best_kkt = T::infinity();
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let gy = grad(&y);
        let fy = smooth(&y);
        let z = loop {
            let mut step = y.clone();
            vector::axpy(-lip.recip(), &gy, &mut step);
            let scaled: Vec<T> = weights.iter().map(|&w| w * lambda / lip).collect();
            let z = slope_prox_unchecked(&step, &scaled);
            let d = vector::sub(&z, &y);
            let model = fy + vector::dot(&gy, &d) + lip * T::lit(0.5) * vector::norm2_sq(&d);
            if smooth(&z) <= model * (T::one() + T::lit(1e-12)) + T::lit(1e-300) {
                break z;
            }
            lip = lip * two;
        };
        let fz = total(&z);
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        let x_prev = x.clone();
        if fz <= fx {
            x = z.clone();
            fx = fz;
            y = x
                .iter()
                .zip(&x_prev)
                .map(|(&a, &b)| a + (t - T::one()) / t_next * (a - b))
                .collect();
            t = t_next;
        } else {
            // Non-monotone step: keep x and restart the momentum.
            y = x.clone();
            t = T::one();
        }
        if iterations % CHECK_EVERY == 0 || iterations >= cfg.max_iter {
            let mut kkt = penalty_distance(&spec.penalty, &x, &grad(&x), 0);
            for gap in CLUSTER_GAPS {
                if kkt <= tol {
                    break;
                }
                if let Some(cand) = polish(problem, &x, weights, lambda, T::lit(gap)) {
                    let kc = penalty_distance(&spec.penalty, &cand, &grad(&cand), 0);
                    let fc = total(&cand);
                    if kc < kkt {
                        x = cand;
                        fx = fc;
                        kkt = kc;
                        y = x.clone();
                        t = T::one();
                    }
                }
            }
            best_kkt = kkt;
            trace.push(fx);
            if kkt <= tol {
                return Ok(Attempt { beta: x, kkt, iterations, converged: true, trace });
            }
        }
    }
    if !best_kkt.is_finite() {
        best_kkt = penalty_distance(&spec.penalty, &x, &grad(&x), 0);
    }
    Ok(Attempt { beta: x, kkt: best_kkt, iterations, converged: false, trace })
}
