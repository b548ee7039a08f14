//! (Block) coordinate descent for the identity link with disjoint ℓ1/ℓ2 blocks.

use crate::error::Result;
use crate::linalg::{sym_eigen, vector, Matrix};
use crate::model::{objective, EstimatorSpec, Problem, TermNorm};
use crate::real::Real;
use crate::solvers::kkt::penalty_distance;
use crate::solvers::prox::soft;
use crate::solvers::{columns, permutation, Attempt, SolverConfig};

/// Max active-set passes between full sweeps.
const ACTIVE_PASSES: usize = 1000;

struct Group<T> {
    idx: Vec<usize>,
    lambda: T,
    eigvals: Vec<T>,
    eigvecs: Matrix<T>,
    gram: Matrix<T>,
}

enum Unit<T> {
    Coord { i: usize, lambda: T },
    Group(Group<T>),
}

impl<T: Real> Unit<T> {
    fn is_active(&self, beta: &[T]) -> bool {
        match self {
            Unit::Coord { i, .. } => beta[*i] != T::zero(),
            Unit::Group(g) => g.idx.iter().any(|&i| beta[i] != T::zero()),
        }
    }
}

/// Exact minimizer of `bᵀAb − 2cᵀb + λ‖b‖₂` given the eigendecomposition of `A`.
fn group_minimizer<T: Real>(c: &[T], lambda: T, eigvals: &[T], eigvecs: &Matrix<T>) -> Vec<T> {
    let m = c.len();
    let zero = vec![T::zero(); m];
    if T::lit(2.0) * vector::norm2(c) <= lambda {
        return zero;
    }
    let lmax = eigvals.iter().fold(T::zero(), |a, &b| a.max(b));
    if lmax <= T::zero() {
        return zero;
    }
    // Components of c along null directions of A are rounding noise: c lies in range(A).
    let chat: Vec<T> = (0..m)
        .map(|k| {
            if eigvals[k] <= T::lit(1e-13) * lmax {
                T::zero()
            } else {
                (0..m).map(|i| eigvecs[(i, k)] * c[i]).sum()
            }
        })
        .collect();
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    // ψ(t) = Σ 4ĉ²/(2Λt + λ)² − 1 is convex and decreasing; Newton from t = 0 increases monotonically to the root.
    let psi = |t: T| -> (T, T) {
        let mut f = -T::one();
        let mut df = T::zero();
        for k in 0..m {
            let d = two * eigvals[k].max(T::zero()) * t + lambda;
            f = f + four * chat[k] * chat[k] / (d * d);
            df = df - T::lit(16.0) * eigvals[k].max(T::zero()) * chat[k] * chat[k] / (d * d * d);
        }
        (f, df)
    };
    let mut t = T::zero();
    for _ in 0..200 {
        let (f, df) = psi(t);
        if f <= T::zero() || df >= T::zero() {
            break;
        }
        let step = -f / df;
        t = t + step;
        if step <= T::lit(4.0) * T::epsilon() * t {
            break;
        }
    }
    if t <= T::zero() {
        return zero;
    }
    let coef: Vec<T> = (0..m)
        .map(|k| two * chat[k] * t / (two * eigvals[k].max(T::zero()) * t + lambda))
        .collect();
    (0..m).map(|i| (0..m).map(|k| eigvecs[(i, k)] * coef[k]).sum()).collect()
}

struct State<'a, T> {
    cols: &'a [Vec<T>],
    col_sq: &'a [T],
    beta: Vec<T>,
    r: Vec<T>,
}

impl<T: Real> State<'_, T> {
    /// Updates one unit; returns the change in fitted values it caused (an upper bound).
    fn update(&mut self, unit: &Unit<T>) -> T {
        match unit {
            Unit::Coord { i, lambda } => {
                let i = *i;
                let old = self.beta[i];
                if self.col_sq[i] == T::zero() {
                    self.beta[i] = T::zero();
                    return T::zero();
                }
                let c = vector::dot(&self.cols[i], &self.r) + self.col_sq[i] * old;
                let new = soft(c, *lambda * T::lit(0.5)) / self.col_sq[i];
                if new != old {
                    vector::axpy(old - new, &self.cols[i], &mut self.r);
                    self.beta[i] = new;
                }
                (new - old).abs() * self.col_sq[i].sqrt()
            }
            Unit::Group(g) => {
                let old: Vec<T> = g.idx.iter().map(|&i| self.beta[i]).collect();
                let ab = g.gram.matvec(&old);
                let c: Vec<T> = g
                    .idx
                    .iter()
                    .zip(&ab)
                    .map(|(&i, &a)| vector::dot(&self.cols[i], &self.r) + a)
                    .collect();
                let new = group_minimizer(&c, g.lambda, &g.eigvals, &g.eigvecs);
                let delta = vector::sub(&new, &old);
                for ((&i, &d), &b) in g.idx.iter().zip(&delta).zip(&new) {
                    if d != T::zero() {
                        vector::axpy(-d, &self.cols[i], &mut self.r);
                    }
                    self.beta[i] = b;
                }
                let lmax = g.eigvals.iter().fold(T::zero(), |a, &b| a.max(b));
                vector::norm2(&delta) * lmax.sqrt()
            }
        }
    }
}

pub(crate) fn solve<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    cfg: &SolverConfig,
    init: Vec<T>,
    blocks: &[Vec<usize>],
) -> Result<Attempt<T>> {
    let x = &problem.x;
    let cols = columns(x);
    let col_sq: Vec<T> = cols.iter().map(|c| vector::norm2_sq(c)).collect();
    let mut units: Vec<Unit<T>> = Vec::new();
    for (term, block) in spec.penalty.terms().iter().zip(blocks) {
        let is_l1 = matches!(term.norm, TermNorm::Lq(q) if q.is_one());
        if is_l1 || block.len() == 1 {
            units.extend(block.iter().map(|&i| Unit::Coord { i, lambda: term.lambda }));
        } else {
            let sub = x.select_columns(block);
            let gram = sub.gram();
            let (eigvals, eigvecs) = sym_eigen(&gram);
            units.push(Unit::Group(Group { idx: block.clone(), lambda: term.lambda, eigvals, eigvecs, gram }));
        }
    }
    let order = permutation(units.len(), cfg.seed);
    let units: Vec<Unit<T>> = {
        let mut slots: Vec<Option<Unit<T>>> = units.into_iter().map(Some).collect();
        order.iter().map(|&k| slots[k].take().expect("permutation")).collect()
    };

    let tol = T::lit(cfg.tol);
    let max_col = col_sq.iter().fold(T::zero(), |a, &b| a.max(b)).sqrt();
    let active_tol = T::lit(0.01) * tol / (T::lit(2.0) * max_col + T::one());
    let r = problem.residual(&init);
    let mut st = State { cols: &cols, col_sq: &col_sq, beta: init, r };
    let mut iterations = 0;
    let mut trace = Vec::new();
    loop {
        for u in &units {
            st.update(u);
        }
        iterations += 1;
        st.r = problem.residual(&st.beta);
        let g = vector::scale(&x.tr_matvec(&st.r), -T::lit(2.0));
        let kkt = penalty_distance(&spec.penalty, &st.beta, &g, 0);
        trace.push(objective(spec, problem, &st.beta)?);
        let converged = kkt <= tol;
        if converged || iterations >= cfg.max_iter {
            return Ok(Attempt { beta: st.beta, kkt, iterations, converged, trace });
        }
        let active: Vec<&Unit<T>> = units.iter().filter(|u| u.is_active(&st.beta)).collect();
        for _ in 0..ACTIVE_PASSES {
            let mut delta = T::zero();
            for u in &active {
                delta = delta.max(st.update(u));
            }
            iterations += 1;
            if delta <= active_tol || iterations >= cfg.max_iter {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_minimizer_orthogonal_case() {
        // A = I: minimizer of ‖b‖² − 2cᵀb + λ‖b‖ is c (1 − λ/(2‖c‖))₊.
        let c = [3.0, 4.0];
        let (w, v) = sym_eigen(&Matrix::<f64>::identity(2));
        let b = group_minimizer(&c, 4.0, &w, &v);
        assert!((b[0] - 1.8).abs() < 1e-14 && (b[1] - 2.4).abs() < 1e-14);
        assert_eq!(group_minimizer(&c, 10.0, &w, &v), vec![0.0, 0.0]);
    }

    #[test]
    fn group_minimizer_satisfies_stationarity() {
        let a = Matrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]).unwrap();
        let (w, v) = sym_eigen(&a);
        let c = [1.5f64, -2.0];
        let lambda = 1.0;
        let b = group_minimizer(&c, lambda, &w, &v);
        let nb = vector::norm2(&b);
        let ab = a.matvec(&b);
        for i in 0..2 {
            let g = 2.0 * ab[i] - 2.0 * c[i] + lambda * b[i] / nb;
            assert!(g.abs() < 1e-12, "{g}");
        }
    }
}
