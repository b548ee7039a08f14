//! ADMM with splitting `z_j = M_j β` for general penalty matrices, plus
//! support polishing when every term is an ℓ1 norm.

use crate::error::{Error, Result};
use crate::linalg::{
    cholesky, cholesky_solve, null_space_rref, pseudoinverse, vector, Matrix, NormExponent, PINV_RTOL,
};
use crate::model::{EstimatorSpec, Problem, TermNorm};
use crate::real::Real;
use crate::solvers::kkt::penalty_distance;
use crate::solvers::prox::{group_soft_threshold, project_l1_ball, project_lp_ball, slope_prox_unchecked, soft_threshold};
use crate::solvers::{Attempt, SolverConfig};

const CHECK_EVERY: usize = 20;
const RHO_EVERY: usize = 50;
/// Projected-gradient budget for the KKT certificate during iterations.
const CHECK_BUDGET: usize = 50;

/// Prox of `t‖·‖` for one term.
fn prox<T: Real>(norm: &TermNorm<T>, v: &[T], t: T) -> Vec<T> {
    match norm {
        TermNorm::Lq(q) if q.is_one() => soft_threshold(v, t),
        TermNorm::Lq(q) if q.is_two() => group_soft_threshold(v, t),
        TermNorm::Lq(NormExponent::Infinity) => vector::sub(v, &project_l1_ball(v, t)),
        TermNorm::Lq(q) => {
            // Moreau: prox_{t‖·‖}(v) = v − t · Π_{dual ball}(v / t).
            let inner = project_lp_ball(&vector::scale(v, t.recip()), q.conjugate().value());
            vector::sub(v, &vector::scale(&inner, t))
        }
        TermNorm::SortedL1(w) => {
            let scaled: Vec<T> = w.iter().map(|&x| x * t).collect();
            slope_prox_unchecked(v, &scaled)
        }
    }
}

/// Minimizes the objective on the face where the zero pattern and signs of
/// `z_j` hold exactly (all terms ℓ1).
fn polish<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>, z: &[Vec<T>]) -> Option<Vec<T>> {
    let p = spec.p();
    let mut zero_rows: Vec<Vec<T>> = Vec::new();
    let mut h = vec![T::zero(); p];
    for (term, zj) in spec.penalty.terms().iter().zip(z) {
        for (i, &zi) in zj.iter().enumerate() {
            let row = term.m.row(i);
            if row.iter().all(|&v| v == T::zero()) {
                continue;
            }
            if zi == T::zero() {
                zero_rows.push(row.to_vec());
            } else {
                vector::axpy(term.lambda * zi.signum(), row, &mut h);
            }
        }
    }
    let basis = if zero_rows.is_empty() {
        Matrix::identity(p)
    } else {
        let c = Matrix::from_rows(&zero_rows).ok()?;
        null_space_rref(&c, T::lit(1e-10))
    };
    if basis.ncols() == 0 {
        return Some(vec![T::zero(); p]);
    }
    let xf = problem.x.matmul(&basis).ok()?;
    let gram = xf.gram();
    let rhs: Vec<T> = vector::sub(&xf.tr_matvec(&problem.y), &vector::scale(&basis.tr_matvec(&h), T::lit(0.5)));
    let theta = match cholesky(&gram) {
        Ok(l) => cholesky_solve(&l, &rhs),
        Err(_) => pseudoinverse(&gram, T::lit(PINV_RTOL)).ok()?.matvec(&rhs),
    };
    Some(basis.matvec(&theta))
}

pub(crate) fn solve<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Vec<T>,
) -> Result<Attempt<T>> {
    let terms = spec.penalty.terms();
    let x = &problem.x;
    let p = spec.p();
    let two = T::lit(2.0);
    let tol = T::lit(cfg.tol);
    let xtx2 = x.gram().scale(two);
    let mut mtm = Matrix::zeros(p, p);
    for t in terms {
        mtm = mtm.add(&t.m.transpose().matmul(&t.m)?)?;
    }
    let trace_of = |m: &Matrix<T>| (0..p).map(|i| m[(i, i)]).sum::<T>();
    let mut rho = {
        let (a, b) = (trace_of(&xtx2), trace_of(&mtm));
        if a > T::zero() && b > T::zero() { a / b } else { T::one() }
    };
    let factor = |rho: T| -> Result<Matrix<T>> {
        cholesky(&xtx2.add(&mtm.scale(rho))?).map_err(|_| {
            Error::AssumptionViolated(
                "the design annihilates part of the unpenalized kernel; the minimizer is not unique".into(),
            )
        })
    };
    let mut chol = factor(rho)?;
    let xty2 = vector::scale(&x.tr_matvec(&problem.y), two);
    let all_l1 = terms.iter().all(|t| matches!(t.norm, TermNorm::Lq(q) if q.is_one()));
    let objective = |b: &[T]| vector::norm2_sq(&problem.residual(b)) + spec.penalty.value(b);
    let kkt_of = |b: &[T], budget: usize| {
        let g = vector::scale(&x.tr_matvec(&problem.residual(b)), -two);
        penalty_distance(&spec.penalty, b, &g, budget)
    };

    let mut beta = init;
    let mut z: Vec<Vec<T>> = terms.iter().map(|t| t.m.matvec(&beta)).collect();
    let mut u: Vec<Vec<T>> = terms.iter().map(|t| vec![T::zero(); t.m.nrows()]).collect();
    let mut best = beta.clone();
    let mut best_obj = objective(&best);
    let mut best_kkt = T::infinity();
    let mut trace = vec![best_obj];
    let mut last_pattern: Option<Vec<Vec<bool>>> = None;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut rhs = xty2.clone();
        for ((t, zj), uj) in terms.iter().zip(&z).zip(&u) {
            vector::axpy(rho, &t.m.tr_matvec(&vector::sub(zj, uj)), &mut rhs);
        }
        beta = cholesky_solve(&chol, &rhs);
        let mut primal = T::zero();
        let mut dual_change = vec![T::zero(); p];
        for ((t, zj), uj) in terms.iter().zip(z.iter_mut()).zip(u.iter_mut()) {
            let v = t.m.matvec(&beta);
            let znew = prox(&t.norm, &vector::add(&v, uj), t.lambda / rho);
            vector::axpy(rho, &t.m.tr_matvec(&vector::sub(&znew, zj)), &mut dual_change);
            let gap = vector::sub(&v, &znew);
            primal = primal + vector::norm2_sq(&gap);
            *uj = vector::add(uj, &gap);
            *zj = znew;
        }
        let primal = primal.sqrt();
        let dual = vector::norm2(&dual_change);
        if iterations % RHO_EVERY == 0 {
            let ten = T::lit(10.0);
            let scale = if primal > ten * dual {
                Some(two)
            } else if dual > ten * primal {
                Some(T::lit(0.5))
            } else {
                None
            };
            if let Some(s) = scale {
                rho = rho * s;
                for uj in u.iter_mut() {
                    *uj = vector::scale(uj, s.recip());
                }
                chol = factor(rho)?;
            }
        }
        if iterations % CHECK_EVERY == 0 || iterations >= cfg.max_iter {
            let mut candidates = vec![beta.clone()];
            if all_l1 {
                let pattern: Vec<Vec<bool>> = z.iter().map(|zj| zj.iter().map(|v| *v == T::zero()).collect()).collect();
                if last_pattern.as_ref() != Some(&pattern) {
                    if let Some(c) = polish(spec, problem, &z) {
                        candidates.push(c);
                    }
                    last_pattern = Some(pattern);
                }
            }
            for c in candidates {
                let obj = objective(&c);
                let kkt = kkt_of(&c, CHECK_BUDGET);
                if kkt < best_kkt || (kkt == best_kkt && obj < best_obj) {
                    best = c;
                    best_obj = obj;
                    best_kkt = kkt;
                }
            }
            trace.push(best_obj);
            if best_kkt <= tol {
                return Ok(Attempt { beta: best, kkt: best_kkt, iterations, converged: true, trace });
            }
        }
    }
    // Final certificate with the full projected-gradient budget.
    let kkt = kkt_of(&best, crate::solvers::kkt::GENERAL_BUDGET);
    let converged = kkt <= tol;
    Ok(Attempt { beta: best, kkt, iterations, converged, trace })
}
