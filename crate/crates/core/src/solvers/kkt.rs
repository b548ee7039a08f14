//! Distance from zero to the subdifferential of the objective.

use crate::error::{Error, Result};
use crate::linalg::{vector, NormExponent};
use crate::model::{EstimatorSpec, PenaltySpec, Problem, Structure, TermNorm};
use crate::real::Real;
use crate::solvers::prox::{
    order_by_magnitude, project_l1_ball, project_l2_ball, project_lp_ball,
    project_permutahedron, project_signed_face, project_sorted_l1_dual_ball,
};

/// Relative size below which an entry of `M_j β` counts as zero.
const ZERO_RTOL: f64 = 1e-11;

/// Projected-gradient budget for penalties without an exact projection.
pub(crate) const GENERAL_BUDGET: usize = 2000;

/// Square-root link: residual norm below this fraction of `‖Y‖` is degenerate.
pub(crate) const DEGENERATE_RTOL: f64 = 1e-12;

/// The subdifferential of one norm at a fixed point `v`, as a projectable set.
enum Subdiff<T> {
    /// ℓ1: `Some(±1)` on nonzero entries, `[−1, 1]` elsewhere.
    L1(Vec<Option<T>>),
    /// Differentiable point: a single subgradient.
    Point(Vec<T>),
    L2Ball,
    L1Ball,
    LpBall(f64),
    /// ℓ∞ at `v ≠ 0`: signed simplex face on the argmax set.
    LinfFace { support: Vec<usize>, signs: Vec<T> },
    /// Sorted-ℓ1: permutahedra on nonzero clusters and the dual ball on the zero cluster.
    Sorted(Vec<Cluster<T>>),
}

struct Cluster<T> {
    idx: Vec<usize>,
    weights: Vec<T>,
    signs: Option<Vec<T>>,
}

fn sign<T: Real>(x: T) -> T {
    if x < T::zero() {
        -T::one()
    } else {
        T::one()
    }
}

impl<T: Real> Subdiff<T> {
    fn at(norm: &TermNorm<T>, v: &[T], tau: T) -> Self {
        let nonzero = v.iter().any(|x| x.abs() > tau);
        match norm {
            TermNorm::Lq(q) if q.is_one() => Subdiff::L1(
                v.iter().map(|&x| if x.abs() > tau { Some(sign(x)) } else { None }).collect(),
            ),
            TermNorm::Lq(q) if q.is_two() => {
                if nonzero {
                    Subdiff::Point(vector::scale(v, vector::norm2(v).recip()))
                } else {
                    Subdiff::L2Ball
                }
            }
            TermNorm::Lq(NormExponent::Infinity) => {
                if nonzero {
                    let m = vector::max_abs(v);
                    let support: Vec<usize> = (0..v.len()).filter(|&i| v[i].abs() >= m - tau).collect();
                    let signs = support.iter().map(|&i| sign(v[i])).collect();
                    Subdiff::LinfFace { support, signs }
                } else {
                    Subdiff::L1Ball
                }
            }
            TermNorm::Lq(q) => {
                if nonzero {
                    let qv = T::lit(q.value());
                    let nq = q.norm(v);
                    Subdiff::Point(
                        v.iter().map(|&x| sign(x) * (x.abs() / nq).powf(qv - T::one())).collect(),
                    )
                } else {
                    Subdiff::LpBall(q.conjugate().value())
                }
            }
            TermNorm::SortedL1(w) => {
                let order = order_by_magnitude(v);
                let mut clusters = Vec::new();
                let mut k = 0;
                while k < order.len() {
                    let head = v[order[k]].abs();
                    if head <= tau {
                        let idx = order[k..].to_vec();
                        clusters.push(Cluster { idx, weights: w[k..].to_vec(), signs: None });
                        break;
                    }
                    let mut end = k + 1;
                    while end < order.len() && head - v[order[end]].abs() <= tau {
                        end += 1;
                    }
                    let idx = order[k..end].to_vec();
                    let signs = idx.iter().map(|&i| sign(v[i])).collect();
                    clusters.push(Cluster { idx, weights: w[k..end].to_vec(), signs: Some(signs) });
                    k = end;
                }
                Subdiff::Sorted(clusters)
            }
        }
    }

    fn project(&self, x: &[T]) -> Vec<T> {
        match self {
            Subdiff::L1(fixed) => x
                .iter()
                .zip(fixed)
                .map(|(&xi, f)| f.unwrap_or_else(|| xi.max(-T::one()).min(T::one())))
                .collect(),
            Subdiff::Point(g) => g.clone(),
            Subdiff::L2Ball => project_l2_ball(x, T::one()),
            Subdiff::L1Ball => project_l1_ball(x, T::one()),
            Subdiff::LpBall(p) => project_lp_ball(x, *p),
            Subdiff::LinfFace { support, signs } => project_signed_face(x, support, signs),
            Subdiff::Sorted(clusters) => {
                let mut out = vec![T::zero(); x.len()];
                for c in clusters {
                    let sub: Vec<T> = match &c.signs {
                        Some(s) => c.idx.iter().zip(s).map(|(&i, &si)| x[i] * si).collect(),
                        None => c.idx.iter().map(|&i| x[i]).collect(),
                    };
                    match &c.signs {
                        Some(s) => {
                            let pr = project_permutahedron(&sub, &c.weights);
                            for ((&i, &si), val) in c.idx.iter().zip(s).zip(pr) {
                                out[i] = si * val;
                            }
                        }
                        None => {
                            let pr = project_sorted_l1_dual_ball(&sub, &c.weights);
                            for (&i, val) in c.idx.iter().zip(pr) {
                                out[i] = val;
                            }
                        }
                    }
                }
                out
            }
        }
    }
}

fn zero_tol<T: Real>(v: &[T], beta: &[T]) -> T {
    T::lit(ZERO_RTOL) * (T::one() + vector::max_abs(v).max(vector::max_abs(beta)))
}

/// Gradient of `g(‖Y − Xβ‖²)` given the residual `r = Y − Xβ`.
pub(crate) fn smooth_gradient<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>, r: &[T]) -> Result<Vec<T>> {
    let rss = vector::norm2_sq(r);
    if spec.link == crate::model::LinkFunction::SquareRoot
        && rss.sqrt() <= T::lit(DEGENERATE_RTOL) * vector::norm2(&problem.y)
    {
        return Err(Error::Degenerate(
            "residual is numerically zero; the square-root link is not differentiable there".into(),
        ));
    }
    let coef = T::lit(2.0) * spec.link.derivative(rss);
    Ok(vector::scale(&problem.x.tr_matvec(r), -coef))
}

/// Euclidean distance from `0` to `∇g(‖Y−Xβ‖²) + Σ_j λ_j M_jᵀ ∂‖·‖_{q_j}(M_j β)`.
///
/// Exact for disjoint diagonal masks and for single terms with `M = I`. For
/// general `M_j` the minimizing subgradients are found by projected gradient
/// started from the partition certificate `κ_j = −(P_j M_j⁺)ᵀ ∇ / λ_j`, so
/// the value returned is an upper bound on the distance.
pub fn kkt_residual<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>, beta: &[T]) -> Result<T> {
    spec.check_problem(problem)?;
    problem.check_beta(beta)?;
    let r = problem.residual(beta);
    let g = smooth_gradient(spec, problem, &r)?;
    Ok(penalty_distance(&spec.penalty, beta, &g, GENERAL_BUDGET))
}

/// Distance from `−g` to `Σ_j λ_j M_jᵀ ∂‖·‖(M_j β)`.
pub(crate) fn penalty_distance<T: Real>(pen: &PenaltySpec<T>, beta: &[T], g: &[T], budget: usize) -> T {
    match pen.structure() {
        Structure::Separable { blocks } => {
            let mut d2 = T::zero();
            for (term, block) in pen.terms().iter().zip(blocks) {
                let v: Vec<T> = block.iter().map(|&i| beta[i]).collect();
                let x: Vec<T> = block.iter().map(|&i| -g[i] / term.lambda).collect();
                let set = Subdiff::at(&term.norm, &v, zero_tol(&v, beta));
                d2 = d2 + term.lambda * term.lambda * vector::norm2_sq(&vector::sub(&x, &set.project(&x)));
            }
            d2.sqrt()
        }
        Structure::SortedL1 => {
            let term = &pen.terms()[0];
            let x = vector::scale(g, -term.lambda.recip());
            let set = Subdiff::at(&term.norm, beta, zero_tol(beta, beta));
            term.lambda * vector::norm2(&vector::sub(&x, &set.project(&x)))
        }
        Structure::General => general_distance(pen, beta, g, budget),
    }
}

fn general_distance<T: Real>(pen: &PenaltySpec<T>, beta: &[T], g: &[T], budget: usize) -> T {
    let terms = pen.terms();
    let sets: Vec<Subdiff<T>> = terms
        .iter()
        .map(|t| {
            let v = t.m.matvec(beta);
            let tau = zero_tol(&v, beta);
            Subdiff::at(&t.norm, &v, tau)
        })
        .collect();
    let combine = |kappa: &[Vec<T>]| -> Vec<T> {
        let mut acc = g.to_vec();
        for (t, k) in terms.iter().zip(kappa) {
            vector::axpy(t.lambda, &t.m.tr_matvec(k), &mut acc);
        }
        acc
    };
    let mut kappa: Vec<Vec<T>> = terms
        .iter()
        .enumerate()
        .zip(&sets)
        .map(|((j, t), set)| {
            let pg = t.projection.tr_matvec(g);
            let start = vector::scale(&pen.pinv(j).tr_matvec(&pg), -t.lambda.recip());
            set.project(&start)
        })
        .collect();
    let mut resid = combine(&kappa);
    let mut best = vector::norm2(&resid);
    let lip: T = terms
        .iter()
        .enumerate()
        .map(|(j, t)| (t.lambda * pen.spectral_norm(j)).powi(2))
        .sum();
    if lip == T::zero() || best == T::zero() {
        return best;
    }
    let step = lip.recip();
    let floor = T::epsilon() * T::lit(4.0) * (T::one() + vector::norm2(g));
    let mut y = kappa.clone();
    let mut t = T::one();
    let mut stall = 0;
    for _ in 0..budget {
        if best <= floor {
            break;
        }
        let ry = combine(&y);
        let next: Vec<Vec<T>> = terms
            .iter()
            .zip(&y)
            .zip(&sets)
            .map(|((term, yj), set)| {
                let grad = vector::scale(&term.m.matvec(&ry), term.lambda);
                let mut z = yj.clone();
                vector::axpy(-step, &grad, &mut z);
                set.project(&z)
            })
            .collect();
        let rn = combine(&next);
        let val = vector::norm2(&rn);
        let t_next = (T::one() + (T::one() + T::lit(4.0) * t * t).sqrt()) * T::lit(0.5);
        if val > vector::norm2(&resid) {
            // Restart momentum on non-monotone steps.
            t = T::one();
            y = kappa.clone();
            stall += 1;
        } else {
            let beta_m = (t - T::one()) / t_next;
            y = next
                .iter()
                .zip(&kappa)
                .map(|(a, b)| vector::add(a, &vector::scale(&vector::sub(a, b), beta_m)))
                .collect();
            t = t_next;
            if val < best * (T::one() - T::lit(1e-10)) {
                stall = 0;
            } else {
                stall += 1;
            }
            kappa = next;
            resid = rn;
            best = best.min(val);
        }
        if stall >= 50 {
            break;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use crate::model::{make_fused, make_group_lasso, make_lasso, make_slope, LinkFunction};

    #[test]
    fn closed_form_lasso_has_zero_residual() {
        let prob = Problem::<f64>::new(Matrix::identity(2), vec![3.0, 0.5]).unwrap();
        let spec = make_lasso(2, 2.0).unwrap();
        assert!(kkt_residual(&spec, &prob, &[2.0, 0.0]).unwrap() <= 1e-12);
        let off = kkt_residual(&spec, &prob, &[1.5, 0.0]).unwrap();
        assert!((off - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_is_optimal_above_threshold() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5], vec![0.3, 0.3]]).unwrap();
        let prob = Problem::new(x.clone(), vec![1.0, -2.0, 0.5]).unwrap();
        let m = 2.0 * vector::max_abs(&x.tr_matvec(&prob.y));
        let spec = make_lasso(2, m).unwrap();
        assert_eq!(kkt_residual(&spec, &prob, &[0.0, 0.0]).unwrap(), 0.0);
        let spec = make_lasso(2, 0.9 * m).unwrap();
        assert!(kkt_residual(&spec, &prob, &[0.0, 0.0]).unwrap() > 0.0);
    }

    #[test]
    fn group_and_slope_examples() {
        let prob = Problem::new(Matrix::identity(2), vec![3.0, 4.0]).unwrap();
        // Group prox with threshold λ/2 = 2.5 on ‖Y‖ = 5 gives Y/2.
        let spec = make_group_lasso(2, &[vec![0, 1]], &[5.0], LinkFunction::Identity).unwrap();
        assert!(kkt_residual(&spec, &prob, &[1.5, 2.0]).unwrap() < 1e-12);
        // Slope with equal weights is the lasso.
        let slope = make_slope(vec![1.0, 1.0], 2.0, LinkFunction::Identity).unwrap();
        assert!(kkt_residual(&slope, &prob, &[2.0, 3.0]).unwrap() < 1e-12);
    }

    #[test]
    fn fused_certificate_from_pseudoinverse() {
        // X = I, λ large: the optimum is the mean.
        let y = vec![1.0, 2.0, 4.0];
        let prob = Problem::new(Matrix::identity(3), y).unwrap();
        let spec = make_fused(3, 100.0).unwrap();
        let mean = 7.0 / 3.0;
        assert!(kkt_residual(&spec, &prob, &[mean, mean, mean]).unwrap() < 1e-12);
        assert!(kkt_residual(&spec, &prob, &[2.0, 2.0, 2.0]).unwrap() > 0.5);
    }

    #[test]
    fn square_root_link_rejects_zero_residual() {
        let prob = Problem::new(Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        let spec = crate::model::make_sqrt_lasso(2, 0.1).unwrap();
        assert!(matches!(kkt_residual(&spec, &prob, &[1.0, 1.0]), Err(Error::Degenerate(_))));
    }
}
