//! Oracle tuning parameters `λ / (2g'(‖Y − Xβ̂λ‖²)) = c ⊙ (‖(X P_j M_j⁺)ᵀ ε‖*)_j`
//! and the zeroing threshold `λ_max`.
//!
//! When the penalty leaves a kernel `span(N)` unpenalized, the fit always
//! reproduces the projection `Q` onto `range(XN)` exactly, so the noise enters
//! the dual terms only through `(I − Q) ε`. With a trivial kernel `Q = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{cholesky, cholesky_solve, pseudoinverse, vector, Matrix, PINV_RTOL};
use crate::model::{EstimatorSpec, LinkFunction, Problem};
use crate::real::Real;
use crate::solvers::{solve_from, Solution, SolverConfig, DEGENERATE_RTOL};

/// Iterations without a new best residual before switching to bracketing.
const STALL_LIMIT: usize = 20;

/// The residual norm is only as accurate as the fit, and the fixed-point map
/// can amplify fit errors, so the square-root solves run at a tighter KKT target.
const INNER_TOL_FACTOR: f64 = 1e-2;

/// Where the square-root fixed-point iteration starts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedPointStart {
    /// `λ⁰ = c ⊙ dual / ‖Y − Xβ̂_id‖` where `β̂_id` is the identity-link fit at
    /// `2 c ⊙ dual`; that fit already solves the square-root problem at `λ⁰`.
    IdentityReduction,
    /// `λ⁰ = c ⊙ dual / ‖Y‖`.
    Naive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedPointConfig {
    pub fp_tol: f64,
    pub max_fp_iter: usize,
    pub damping: f64,
    pub start: FixedPointStart,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { fp_tol: 1e-8, max_fp_iter: 200, damping: 0.5, start: FixedPointStart::IdentityReduction }
    }
}

impl FixedPointConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.fp_tol > 0.0) || !self.fp_tol.is_finite() {
            return Err(Error::InvalidInput(format!("fp_tol must be positive, got {}", self.fp_tol)));
        }
        if self.max_fp_iter == 0 {
            return Err(Error::InvalidInput("max_fp_iter must be at least 1".into()));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidInput(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        Ok(())
    }
}

/// One evaluation of the fixed-point map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointStep<T> {
    pub lambda: Vec<T>,
    /// `‖Y − Xβ̂λ‖`.
    pub residual_norm: T,
    /// `‖λ − 2g'(‖Y − Xβ̂λ‖²)(c ⊙ dual)‖∞ / ‖λ‖∞`.
    pub fp_residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleTuning<T> {
    pub c: Vec<T>,
    pub lambda: Vec<T>,
    pub fixed_point_residual: T,
    pub iterations: usize,
    pub dual_terms: Vec<T>,
    pub trace: Vec<FixedPointStep<T>>,
    /// The damped iteration stalled and the root was bracketed instead.
    pub bracketed: bool,
}

/// Basis `XN` of the fitted kernel directions, `None` for a trivial kernel.
fn kernel_design<T: Real>(spec: &EstimatorSpec<T>, x: &Matrix<T>) -> Result<Option<Matrix<T>>> {
    match spec.penalty.kernel() {
        None => Ok(None),
        Some(n) => Ok(Some(x.matmul(n)?)),
    }
}

/// Least-squares coefficients of `v` on the columns of `a`.
fn least_squares<T: Real>(a: &Matrix<T>, v: &[T]) -> Result<Vec<T>> {
    let rhs = a.tr_matvec(v);
    let gram = a.gram();
    Ok(match cholesky(&gram) {
        Ok(l) => cholesky_solve(&l, &rhs),
        Err(_) => pseudoinverse(&gram, T::lit(PINV_RTOL))?.matvec(&rhs),
    })
}

/// `Q v`, the projection of `v` onto `range(XN)`; zero for a trivial kernel.
pub fn kernel_component<T: Real>(spec: &EstimatorSpec<T>, x: &Matrix<T>, v: &[T]) -> Result<Vec<T>> {
    if v.len() != x.nrows() {
        return Err(dim_mismatch("vector length vs design rows", x.nrows(), v.len()));
    }
    match kernel_design(spec, x)? {
        None => Ok(vec![T::zero(); v.len()]),
        Some(xn) => Ok(xn.matvec(&least_squares(&xn, v)?)),
    }
}

/// Unpenalized least-squares fit `β_N = N (XN)⁺ Y`; zero for a trivial kernel.
///
/// This is the estimate at (and above) `λ_max`.
pub fn kernel_fit<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>) -> Result<Vec<T>> {
    spec.check_problem(problem)?;
    match (spec.penalty.kernel(), kernel_design(spec, &problem.x)?) {
        (Some(n), Some(xn)) => Ok(n.matvec(&least_squares(&xn, &problem.y)?)),
        _ => Ok(vec![T::zero(); spec.p()]),
    }
}

/// `(‖(P_j M_j⁺)ᵀ v‖*_{q_j})_j`.
fn term_duals<T: Real>(spec: &EstimatorSpec<T>, v: &[T]) -> Vec<T> {
    spec.penalty
        .terms()
        .iter()
        .enumerate()
        .map(|(j, t)| {
            let w = spec.penalty.pinv(j).tr_matvec(&t.projection.tr_matvec(v));
            t.norm.dual_norm(&w)
        })
        .collect()
}

/// `(‖(X P_j M_j⁺)ᵀ (I − Q) ε‖*_{q_j})_j`; every entry must be positive.
pub fn dual_noise_terms<T: Real>(spec: &EstimatorSpec<T>, x: &Matrix<T>, eps: &[T]) -> Result<Vec<T>> {
    if x.ncols() != spec.p() {
        return Err(dim_mismatch("design columns vs penalty dimension", spec.p(), x.ncols()));
    }
    let q = kernel_component(spec, x, eps)?;
    let w = x.tr_matvec(&vector::sub(eps, &q));
    let duals = term_duals(spec, &w);
    if let Some(j) = duals.iter().position(|d| !(*d > T::zero())) {
        return Err(Error::AssumptionViolated(format!(
            "dual noise term {j} is zero; the tuning equation has no positive solution"
        )));
    }
    Ok(duals)
}

fn check_c<T: Real>(c: &[T], k: usize) -> Result<()> {
    if c.len() != k {
        return Err(dim_mismatch("constants c", k, c.len()));
    }
    if let Some(v) = c.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("constants c must be positive and finite, got {v}")));
    }
    Ok(())
}

/// Relative residual of the tuning equation at `λ`, given `‖Y − Xβ̂λ‖`.
pub fn fixed_point_residual<T: Real>(link: LinkFunction, lambda: &[T], scaled_duals: &[T], residual_norm: T) -> T {
    let two_gp = T::lit(2.0) * link.derivative(residual_norm * residual_norm);
    let diff: Vec<T> = lambda.iter().zip(scaled_duals).map(|(&l, &d)| l - two_gp * d).collect();
    vector::max_abs(&diff) / vector::max_abs(lambda)
}

/// Oracle tuning parameters; see [`oracle_solution`]. The identity link needs no solve.
pub fn oracle_lambda<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    c: &[T],
    cfg: &SolverConfig,
    fp: &FixedPointConfig,
) -> Result<OracleTuning<T>> {
    if spec.link == LinkFunction::Identity {
        fp.validate()?;
        spec.check_problem(problem)?;
        check_c(c, spec.penalty.len())?;
        let dual_terms = dual_noise_terms(spec, &problem.x, &problem.truth()?.eps)?;
        return Ok(closed_form(c, dual_terms));
    }
    Ok(oracle_solution(spec, problem, c, cfg, fp)?.0)
}

fn closed_form<T: Real>(c: &[T], dual_terms: Vec<T>) -> OracleTuning<T> {
    let lambda = c.iter().zip(&dual_terms).map(|(&a, &b)| T::lit(2.0) * a * b).collect();
    OracleTuning {
        c: c.to_vec(),
        lambda,
        fixed_point_residual: T::zero(),
        iterations: 0,
        dual_terms,
        trace: Vec::new(),
        bracketed: false,
    }
}

/// Oracle tuning parameters together with the fit at those parameters.
///
/// Identity link: `λ_j = 2 c_j dual_j` in closed form. Square-root link:
/// damped iteration `λ ← (1 − d) λ + d (c ⊙ dual) / ‖Y − Xβ̂λ‖`. Every
/// fixed point lies on the ray `s · (c ⊙ dual)`, and `s ↦ s‖Y − Xβ̂(s)‖` is
/// increasing, so a stalled iteration falls back to bracketing `s`.
pub fn oracle_solution<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    c: &[T],
    cfg: &SolverConfig,
    fp: &FixedPointConfig,
) -> Result<(OracleTuning<T>, Solution<T>)> {
    fp.validate()?;
    spec.check_problem(problem)?;
    check_c(c, spec.penalty.len())?;
    let eps = &problem.truth()?.eps;
    let dual_terms = dual_noise_terms(spec, &problem.x, eps)?;
    let w: Vec<T> = c.iter().zip(&dual_terms).map(|(&a, &b)| a * b).collect();

    match spec.link {
        LinkFunction::Identity => {
            let tuning = closed_form(c, dual_terms);
            let sol = solve_from(&spec.with_lambdas(&tuning.lambda)?, problem, cfg, None)?;
            Ok((tuning, sol))
        }
        LinkFunction::SquareRoot => {
            let mut it = SqrtFixedPoint::new(spec, problem, cfg, fp, &w)?;
            let (lambda, sol, res) = it.run()?;
            let tuning = OracleTuning {
                c: c.to_vec(),
                lambda,
                fixed_point_residual: res,
                iterations: it.trace.len(),
                dual_terms,
                trace: it.trace,
                bracketed: it.bracketed,
            };
            Ok((tuning, sol))
        }
    }
}

struct SqrtFixedPoint<'a, T: Real> {
    spec: &'a EstimatorSpec<T>,
    problem: &'a Problem<T>,
    cfg: &'a SolverConfig,
    fp: &'a FixedPointConfig,
    w: Vec<T>,
    floor: T,
    warm: Option<Vec<T>>,
    trace: Vec<FixedPointStep<T>>,
    bracketed: bool,
}

impl<'a, T: Real> SqrtFixedPoint<'a, T> {
    fn new(
        spec: &'a EstimatorSpec<T>,
        problem: &'a Problem<T>,
        cfg: &'a SolverConfig,
        fp: &'a FixedPointConfig,
        w: &[T],
    ) -> Result<Self> {
        let floor = T::lit(DEGENERATE_RTOL) * vector::norm2(&problem.y);
        Ok(SqrtFixedPoint { spec, problem, cfg, fp, w: w.to_vec(), floor, warm: None, trace: Vec::new(), bracketed: false })
    }

    /// Solves at `λ`, records the step and returns `(fit, ‖r‖, residual)`.
    fn evaluate(&mut self, lambda: &[T]) -> Result<(Solution<T>, T, T)> {
        let cfg = self.cfg.with_tol(self.cfg.tol * INNER_TOL_FACTOR);
        let sol = solve_from(&self.spec.with_lambdas(lambda)?, self.problem, &cfg, self.warm.as_deref())?;
        if !sol.converged {
            return Err(self.failure(format!(
                "square-root solve did not converge (KKT residual {:e})",
                sol.kkt_residual.to_f64_lossy()
            )));
        }
        let rn = vector::norm2(&self.problem.residual(&sol.beta));
        if rn <= self.floor {
            return Err(Error::Degenerate(format!(
                "residual norm {rn} vanished during the fixed-point iteration"
            )));
        }
        let res = fixed_point_residual(LinkFunction::SquareRoot, lambda, &self.w, rn);
        self.trace.push(FixedPointStep { lambda: lambda.to_vec(), residual_norm: rn, fp_residual: res });
        self.warm = Some(sol.beta.clone());
        Ok((sol, rn, res))
    }

    fn failure(&self, why: String) -> Error {
        let last = self.trace.last().map_or(f64::INFINITY, |s| s.fp_residual.to_f64_lossy());
        log::debug!("fixed-point failure: {why}");
        Error::NonConvergence {
            iterations: self.trace.len(),
            residual: last,
            trace: self
                .trace
                .iter()
                .map(|s| {
                    let mut row: Vec<f64> = s.lambda.iter().map(|v| v.to_f64_lossy()).collect();
                    row.push(s.residual_norm.to_f64_lossy());
                    row.push(s.fp_residual.to_f64_lossy());
                    row
                })
                .collect(),
        }
    }

    fn start(&mut self) -> Result<Vec<T>> {
        match self.fp.start {
            FixedPointStart::Naive => Ok(vector::scale(&self.w, vector::norm2(&self.problem.y).recip())),
            FixedPointStart::IdentityReduction => {
                let mut ident = self.spec.with_lambdas(&vector::scale(&self.w, T::lit(2.0)))?;
                ident.link = LinkFunction::Identity;
                let cfg = self.cfg.with_tol(self.cfg.tol * INNER_TOL_FACTOR);
                let sol = solve_from(&ident, self.problem, &cfg, None)?;
                let rn = vector::norm2(&self.problem.residual(&sol.beta));
                if !sol.converged || rn <= self.floor {
                    // Fall back to the plain start; the iteration will sort it out.
                    return Ok(vector::scale(&self.w, vector::norm2(&self.problem.y).recip()));
                }
                self.warm = Some(sol.beta);
                Ok(vector::scale(&self.w, rn.recip()))
            }
        }
    }

    fn run(&mut self) -> Result<(Vec<T>, Solution<T>, T)> {
        let tol = T::lit(self.fp.fp_tol);
        let d = T::lit(self.fp.damping);
        let mut lambda = self.start()?;
        let mut best = T::infinity();
        let mut since_best = 0;
        while self.trace.len() < self.fp.max_fp_iter {
            let (sol, rn, res) = self.evaluate(&lambda)?;
            if res <= tol {
                return Ok((lambda, sol, res));
            }
            if res < best {
                best = res;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= STALL_LIMIT {
                    return self.bracket(&lambda, rn);
                }
            }
            let target = vector::scale(&self.w, rn.recip());
            lambda = lambda.iter().zip(&target).map(|(&l, &t)| (T::one() - d) * l + d * t).collect();
        }
        Err(self.failure("iteration budget exhausted".into()))
    }

    /// Regula falsi (Illinois) on `h(s) = s‖Y − Xβ̂(s w)‖ − 1`.
    fn bracket(&mut self, lambda: &[T], rn: T) -> Result<(Vec<T>, Solution<T>, T)> {
        self.bracketed = true;
        let tol = T::lit(self.fp.fp_tol);
        let wmax = vector::max_abs(&self.w);
        let mut s = vector::max_abs(lambda) / wmax;
        let mut h = s * rn - T::one();
        let (mut lo, mut hlo, mut hi, mut hhi);
        if h >= T::zero() {
            hi = s;
            hhi = h;
            // h(1/‖Y‖) ≤ 0 because the fit never has a larger residual than ‖Y‖.
            lo = vector::norm2(&self.problem.y).recip();
            loop {
                let (_, r, _) = self.evaluate(&vector::scale(&self.w, lo))?;
                hlo = lo * r - T::one();
                if hlo < T::zero() {
                    break;
                }
                if self.trace.len() >= self.fp.max_fp_iter {
                    return Err(self.failure("could not bracket the fixed point".into()));
                }
                lo = lo * T::lit(0.5);
            }
        } else {
            lo = s;
            hlo = h;
            hi = s;
            loop {
                if self.trace.len() >= self.fp.max_fp_iter {
                    return Err(self.failure("could not bracket the fixed point".into()));
                }
                hi = hi * T::lit(2.0);
                let (_, r, _) = self.evaluate(&vector::scale(&self.w, hi))?;
                hhi = hi * r - T::one();
                if hhi >= T::zero() {
                    break;
                }
                lo = hi;
                hlo = hhi;
            }
        }
        let mut side = 0i8;
        while self.trace.len() < self.fp.max_fp_iter {
            s = if hhi > hlo { lo - hlo * (hi - lo) / (hhi - hlo) } else { (lo + hi) * T::lit(0.5) };
            if !(s > lo && s < hi) {
                s = (lo + hi) * T::lit(0.5);
                if !(s > lo && s < hi) {
                    return Err(self.failure("bracket collapsed to adjacent floating-point values".into()));
                }
            }
            let lam = vector::scale(&self.w, s);
            let (sol, r, res) = self.evaluate(&lam)?;
            if res <= tol {
                return Ok((lam, sol, res));
            }
            h = s * r - T::one();
            if h < T::zero() {
                lo = s;
                hlo = h;
                if side == -1 {
                    hhi = hhi * T::lit(0.5);
                }
                side = -1;
            } else {
                hi = s;
                hhi = h;
                if side == 1 {
                    hlo = hlo * T::lit(0.5);
                }
                side = 1;
            }
        }
        Err(self.failure("bracketing did not reach the tolerance".into()))
    }
}

/// Zeroing threshold: every entry equals
/// `m = max_j 2g'(‖Y₀‖²) ‖(P_j M_j⁺)ᵀ Xᵀ Y₀‖* ∨ 1` with `Y₀ = (I − Q) Y`.
///
/// For diagonal 0/1 masks with `P_j = I` the inner vector is `XᵀY` restricted
/// to the rows penalized by `M_j`. At `λ ≥ m` the estimate is the kernel fit
/// (zero for a trivial kernel).
pub fn lambda_max<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>) -> Result<Vec<T>> {
    spec.check_problem(problem)?;
    let q = kernel_component(spec, &problem.x, &problem.y)?;
    let y0 = vector::sub(&problem.y, &q);
    let rss = vector::norm2_sq(&y0);
    if spec.link == LinkFunction::SquareRoot && rss.sqrt() <= T::lit(DEGENERATE_RTOL) * vector::norm2(&problem.y) {
        return Err(Error::Degenerate("Y lies in the unpenalized fitted space; the square-root link is undefined at the kernel fit".into()));
    }
    let v = vector::scale(&problem.x.tr_matvec(&y0), T::lit(2.0) * spec.link.derivative(rss));
    let m = term_duals(spec, &v).into_iter().fold(T::one(), |acc, d| acc.max(d));
    Ok(vec![m; spec.penalty.len()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_fused, make_lasso, make_sqrt_lasso};

    fn toy() -> Problem<f64> {
        let x = Matrix::from_rows(&[
            vec![1.0, 0.5, -0.2],
            vec![0.3, -1.0, 0.8],
            vec![-0.7, 0.2, 1.1],
            vec![0.9, 0.4, -0.6],
        ])
        .unwrap();
        Problem::from_truth(x, vec![1.0, 0.0, -0.5], vec![0.3, -0.2, 0.5, 0.1]).unwrap()
    }

    #[test]
    fn lasso_closed_form() {
        let prob = toy();
        let spec = make_lasso(3, 1.0).unwrap();
        let t = oracle_lambda(&spec, &prob, &[1.0], &SolverConfig::default(), &FixedPointConfig::default()).unwrap();
        let xe = prob.x.tr_matvec(&prob.truth().unwrap().eps);
        assert_eq!(t.lambda[0], 2.0 * vector::max_abs(&xe));
        assert_eq!(t.iterations, 0);
        assert_eq!(t.fixed_point_residual, 0.0);
    }

    #[test]
    fn sqrt_fixed_point_from_both_starts() {
        use crate::experiments::{generate_design, generate_noise, make_beta_star, NoiseKind};
        let x = generate_design(40, 8, 0.3, 5).unwrap();
        let eps = generate_noise(NoiseKind::Gaussian { sigma: 1.0 }, 40, 6).unwrap();
        let prob = Problem::from_truth(x, make_beta_star(8, 2, 0.5).unwrap(), eps).unwrap();
        let spec = make_sqrt_lasso(8, 1.0).unwrap();
        let xe = prob.x.tr_matvec(&prob.truth().unwrap().eps);
        for start in [FixedPointStart::IdentityReduction, FixedPointStart::Naive] {
            let fp = FixedPointConfig { start, ..Default::default() };
            let (t, sol) = oracle_solution(&spec, &prob, &[1.0], &SolverConfig::default(), &fp).unwrap();
            let rn = vector::norm2(&prob.residual(&sol.beta));
            let want = vector::max_abs(&xe) / rn;
            assert!((t.lambda[0] - want).abs() <= 1e-7 * want, "{start:?}: {} vs {want}", t.lambda[0]);
            assert!(t.fixed_point_residual <= 1e-8);
        }
    }

    #[test]
    fn identity_reduction_is_immediate_on_a_tiny_problem() {
        let prob = toy();
        let spec = make_sqrt_lasso(3, 1.0).unwrap();
        let t = oracle_lambda(&spec, &prob, &[1.0], &SolverConfig::default(), &FixedPointConfig::default()).unwrap();
        assert_eq!(t.iterations, 1);
        assert!(t.fixed_point_residual <= 1e-8);
    }

    #[test]
    fn lambda_max_lasso_formula() {
        let prob = toy();
        let spec = make_lasso(3, 1.0).unwrap();
        let m = lambda_max(&spec, &prob).unwrap()[0];
        let want = (2.0 * vector::max_abs(&prob.x.tr_matvec(&prob.y))).max(1.0);
        assert!((m - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn fused_dual_ignores_kernel_noise() {
        // X = I: (D⁺)ᵀ annihilates constants, so the kernel correction is invisible.
        let p = 5;
        let eps = vec![0.4, -0.1, 0.3, 0.9, -0.6];
        let spec = make_fused(p, 1.0).unwrap();
        let x = Matrix::identity(p);
        let d = dual_noise_terms(&spec, &x, &eps).unwrap()[0];
        let dp = crate::linalg::fused_pinv::<f64>(p).unwrap();
        let want = vector::max_abs(&dp.tr_matvec(&eps));
        assert!((d - want).abs() < 1e-12);
        let q = kernel_component(&spec, &x, &eps).unwrap();
        let mean = eps.iter().sum::<f64>() / p as f64;
        assert!(q.iter().all(|v| (v - mean).abs() < 1e-12));
    }
}
