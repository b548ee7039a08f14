//! Prediction bounds for oracle-tuned estimators and their certification.
//!
//! For any `u ∈ (0,1)` and any `β`,
//!
//! ```text
//! ‖X(β* − β̂)‖²/n ≤ ‖X(β* − β)‖²/(4u(1−u)n)
//!                 + (1/n) Σ_j (1 + c_j)/(1 − u) · dual_j ‖M_j β‖
//!                 − (1/n) Σ_j (c_j − 1)/(1 − u) · dual_j ‖M_j β̂‖
//!                 + κ(β)/((1 − u) n)
//! ```
//!
//! with `dual_j = ‖(X P_j M_j⁺)ᵀ (I − Q) ε‖*` and the kernel term
//! `κ(β) = ‖Qε‖² + ⟨Qε, X(β* − β)⟩`, which vanishes for penalties with a
//! trivial common kernel (`Q = 0`). It accounts for the unpenalized
//! directions of fused and trend-filtering penalties, where the fit reproduces
//! `Q Y` exactly.

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::vector;
use crate::model::{EstimatorSpec, Problem};
use crate::real::Real;
use crate::solvers::Solution;
use crate::tuning::{kernel_component, OracleTuning};

/// Relative agreement required between the estimator's `λ` and the oracle tuning.
const TUNING_MATCH_RTOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Theorem,
    Special1,
    Special2,
    La,
}

/// A comparison point `β` in the bound.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate<T> {
    pub label: String,
    pub beta: Vec<T>,
}

impl<T: Real> Candidate<T> {
    pub fn new(label: impl Into<String>, beta: Vec<T>) -> Self {
        Candidate { label: label.into(), beta }
    }

    pub fn truth(problem: &Problem<T>) -> Result<Self> {
        Ok(Candidate::new("beta_star", problem.truth()?.beta_star.clone()))
    }

    pub fn zero(p: usize) -> Self {
        Candidate::new("zero", vec![T::zero(); p])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum BoundMode<T> {
    Theorem { u: T, candidate: Candidate<T> },
    Special1 { candidates: Vec<Candidate<T>> },
    Special2,
    La { candidates: Vec<Candidate<T>> },
}

/// Contribution of penalty term `j` at the reported candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermContribution<T> {
    pub dual: T,
    /// Term in `‖M_j β‖`.
    pub penalty: T,
    /// Nonpositive for `c_j ≥ 1`: the estimator-dependent term in `‖M_j β̂‖`.
    pub credit: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport<T> {
    pub kind: BoundKind,
    /// `‖X(β* − β̂)‖²/n` (for `La`, the loss `L_a(β̂)`).
    pub lhs: T,
    pub rhs: T,
    /// `None` stands for the limit `u → 0`.
    pub u: Option<T>,
    pub candidate: String,
    pub approximation: T,
    pub per_term: Vec<TermContribution<T>>,
    pub kernel_term: T,
    /// Multiplier in front of `min L_a` (one for the other kinds).
    pub factor: T,
    pub slack: T,
    pub allowance: T,
    pub holds: bool,
    /// False when the solution is not converged or the tuning does not match the estimator.
    pub certified: bool,
    pub note: Option<String>,
}

/// `10 · tol · (1 + ‖Y‖²/n)`: room for inexact minimization.
pub fn slack_allowance<T: Real>(problem: &Problem<T>, tol: f64) -> T {
    let n = T::from_count(problem.n());
    T::lit(10.0 * tol) * (T::one() + vector::norm2_sq(&problem.y) / n)
}

/// `‖X(β* − β)‖²/n` over the observation rows.
pub fn prediction_loss<T: Real>(problem: &Problem<T>, beta: &[T]) -> Result<T> {
    problem.check_beta(beta)?;
    let bs = &problem.truth()?.beta_star;
    let d = problem.x.matvec(&vector::sub(bs, beta));
    let n = problem.n();
    Ok(vector::norm2_sq(&d[..n]) / T::from_count(n))
}

/// `‖X(β* − β)‖²` over all rows (augmented rows included).
fn approximation_error<T: Real>(problem: &Problem<T>, beta: &[T]) -> Result<(T, Vec<T>)> {
    problem.check_beta(beta)?;
    let bs = &problem.truth()?.beta_star;
    let d = problem.x.matvec(&vector::sub(bs, beta));
    Ok((vector::norm2_sq(&d), d))
}

/// `κ(β) = ‖Qε‖² + ⟨Qε, X(β* − β)⟩` given `X(β* − β)`.
struct KernelNoise<T> {
    q: Vec<T>,
    q_sq: T,
}

impl<T: Real> KernelNoise<T> {
    fn new(spec: &EstimatorSpec<T>, problem: &Problem<T>) -> Result<Self> {
        let q = kernel_component(spec, &problem.x, &problem.truth()?.eps)?;
        let q_sq = vector::norm2_sq(&q);
        Ok(KernelNoise { q, q_sq })
    }

    fn at(&self, xd: &[T]) -> T {
        self.q_sq + vector::dot(&self.q, xd)
    }
}

fn check_tuning<T: Real>(spec: &EstimatorSpec<T>, tuning: &OracleTuning<T>) -> Result<()> {
    let k = spec.penalty.len();
    for (what, len) in [("tuning c", tuning.c.len()), ("tuning dual terms", tuning.dual_terms.len())] {
        if len != k {
            return Err(dim_mismatch(what, k, len));
        }
    }
    Ok(())
}

fn require_unit_c<T: Real>(tuning: &OracleTuning<T>, what: &str) -> Result<()> {
    if tuning.c.iter().any(|&c| (c - T::one()).abs() > T::lit(1e-12)) {
        return Err(Error::InvalidPremise(format!("{what} requires the tuning constants c = 1")));
    }
    Ok(())
}

/// Whether the estimator's `λ` equals the oracle tuning.
pub fn tuning_matches<T: Real>(spec: &EstimatorSpec<T>, tuning: &OracleTuning<T>) -> bool {
    let lam = spec.penalty.lambdas();
    lam.len() == tuning.lambda.len()
        && lam
            .iter()
            .zip(&tuning.lambda)
            .all(|(&a, &b)| (a - b).abs() <= T::lit(TUNING_MATCH_RTOL) * a.abs().max(b.abs()))
}

struct TheoremParts<T> {
    approximation: T,
    per_term: Vec<TermContribution<T>>,
    kernel: T,
}

impl<T: Real> TheoremParts<T> {
    fn total(&self) -> T {
        self.per_term.iter().fold(self.approximation + self.kernel, |acc, t| acc + t.penalty + t.credit)
    }
}

fn theorem_parts<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    beta_hat: &[T],
    beta: &[T],
    u: Option<T>,
    kn: &KernelNoise<T>,
) -> Result<TheoremParts<T>> {
    check_tuning(spec, tuning)?;
    let n = T::from_count(problem.n());
    let one = T::one();
    let (err, xd) = approximation_error(problem, beta)?;
    let (approximation, scale) = match u {
        Some(u) => {
            if !(u > T::zero() && u < one) {
                return Err(Error::InvalidInput(format!("u must lie in (0, 1), got {u}")));
            }
            (err / (T::lit(4.0) * u * (one - u) * n), (one - u).recip())
        }
        None => {
            // u → 0 is finite only at zero approximation error.
            if err > T::zero() {
                return Err(Error::InvalidInput("the limit u → 0 requires X β = X β*".into()));
            }
            (T::zero(), one)
        }
    };
    let nb = spec.penalty.term_norms(beta);
    let nh = spec.penalty.term_norms(beta_hat);
    let per_term = (0..spec.penalty.len())
        .map(|j| {
            let (c, d) = (tuning.c[j], tuning.dual_terms[j]);
            TermContribution {
                dual: d,
                penalty: (one + c) * scale * d * nb[j] / n,
                credit: -(c - one) * scale * d * nh[j] / n,
            }
        })
        .collect();
    Ok(TheoremParts { approximation, per_term, kernel: kn.at(&xd) * scale / n })
}

/// Right-hand side of the oracle inequality at `(u, β)`, including the
/// estimator-dependent credit term.
pub fn theorem_rhs<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    solution: &Solution<T>,
    beta: &[T],
    u: T,
) -> Result<T> {
    let kn = KernelNoise::new(spec, problem)?;
    Ok(theorem_parts(spec, problem, tuning, &solution.beta, beta, Some(u), &kn)?.total())
}

fn report<T: Real>(
    kind: BoundKind,
    lhs: T,
    u: Option<T>,
    candidate: String,
    parts: TheoremParts<T>,
    factor: T,
    rhs: T,
    allowance: T,
    certified: bool,
) -> BoundReport<T> {
    let slack = rhs - lhs;
    BoundReport {
        kind,
        lhs,
        rhs,
        u,
        candidate,
        approximation: parts.approximation,
        per_term: parts.per_term,
        kernel_term: parts.kernel,
        factor,
        slack,
        allowance,
        holds: lhs <= rhs + allowance,
        certified,
        note: None,
    }
}

fn certified<T: Real>(spec: &EstimatorSpec<T>, tuning: &OracleTuning<T>, solution: &Solution<T>) -> bool {
    solution.converged && tuning_matches(spec, tuning)
}

fn with_defaults<T: Real>(problem: &Problem<T>, candidates: &[Candidate<T>]) -> Result<Vec<Candidate<T>>> {
    let mut all = vec![Candidate::truth(problem)?, Candidate::zero(problem.p())];
    all.extend(candidates.iter().cloned());
    Ok(all)
}

/// Theorem bound at one `(u, β)`.
pub fn theorem_bound<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    solution: &Solution<T>,
    u: T,
    candidate: &Candidate<T>,
    tol: f64,
) -> Result<BoundReport<T>> {
    let kn = KernelNoise::new(spec, problem)?;
    let parts = theorem_parts(spec, problem, tuning, &solution.beta, &candidate.beta, Some(u), &kn)?;
    let rhs = parts.total();
    let lhs = prediction_loss(problem, &solution.beta)?;
    Ok(report(
        BoundKind::Theorem,
        lhs,
        Some(u),
        candidate.label.clone(),
        parts,
        T::one(),
        rhs,
        slack_allowance(problem, tol),
        certified(spec, tuning, solution),
    ))
}

/// `min_β ‖X(β* − β)‖²/n + (4/n) Σ_j dual_j ‖M_j β‖` (plus the kernel term)
/// over the candidates, which always include `β*` and `0`. Needs `c = 1`.
pub fn special1_bound<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    solution: &Solution<T>,
    candidates: &[Candidate<T>],
    tol: f64,
) -> Result<BoundReport<T>> {
    require_unit_c(tuning, "the u = 1/2 bound")?;
    let kn = KernelNoise::new(spec, problem)?;
    let half = T::lit(0.5);
    let mut best: Option<(T, String, TheoremParts<T>)> = None;
    for cand in with_defaults(problem, candidates)? {
        let parts = theorem_parts(spec, problem, tuning, &solution.beta, &cand.beta, Some(half), &kn)?;
        let v = parts.total();
        if best.as_ref().map_or(true, |b| v < b.0) {
            best = Some((v, cand.label, parts));
        }
    }
    let (rhs, label, parts) = best.expect("at least two candidates");
    let lhs = prediction_loss(problem, &solution.beta)?;
    Ok(report(
        BoundKind::Special1,
        lhs,
        Some(half),
        label,
        parts,
        T::one(),
        rhs,
        slack_allowance(problem, tol),
        certified(spec, tuning, solution),
    ))
}

/// `(2/n) Σ_j dual_j ‖M_j β*‖` (plus `‖Qε‖²/n`): the limit `u → 0` at `β = β*`. Needs `c = 1`.
pub fn special2_bound<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    solution: &Solution<T>,
    tol: f64,
) -> Result<BoundReport<T>> {
    require_unit_c(tuning, "the u → 0 bound")?;
    let kn = KernelNoise::new(spec, problem)?;
    let truth = Candidate::truth(problem)?;
    let parts = theorem_parts(spec, problem, tuning, &solution.beta, &truth.beta, None, &kn)?;
    let rhs = parts.total();
    let lhs = prediction_loss(problem, &solution.beta)?;
    Ok(report(
        BoundKind::Special2,
        lhs,
        None,
        truth.label,
        parts,
        T::one(),
        rhs,
        slack_allowance(problem, tol),
        certified(spec, tuning, solution),
    ))
}

/// `L_a(β) = ‖X(β* − β)‖²/n + (1/n) Σ_j a_j ‖M_j β‖` (all rows of `X`).
pub fn la_loss<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>, a: &[T], beta: &[T]) -> Result<T> {
    if a.len() != spec.penalty.len() {
        return Err(dim_mismatch("weights a", spec.penalty.len(), a.len()));
    }
    let (err, _) = approximation_error(problem, beta)?;
    let n = T::from_count(problem.n());
    let pen = spec.penalty.term_norms(beta).iter().zip(a).fold(T::zero(), |acc, (&v, &w)| acc + w * v);
    Ok((err + pen) / n)
}

/// `a_j = 2(c_j − 1) dual_j`; every `c_j` must exceed one.
pub fn la_weights<T: Real>(tuning: &OracleTuning<T>) -> Result<Vec<T>> {
    if let Some(c) = tuning.c.iter().find(|&&c| !(c > T::one())) {
        return Err(Error::InvalidPremise(format!("the L_a bound needs every c_j > 1, got {c}")));
    }
    Ok(tuning.c.iter().zip(&tuning.dual_terms).map(|(&c, &d)| T::lit(2.0) * (c - T::one()) * d).collect())
}

/// `L_a(β̂) ≤ (1 + max_j 4 dual_j / a_j) · min L_a` over the candidates (plus
/// the kernel term), with `a_j = 2(c_j − 1) dual_j`.
pub fn la_sharp_bound<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    solution: &Solution<T>,
    candidates: &[Candidate<T>],
    tol: f64,
) -> Result<BoundReport<T>> {
    check_tuning(spec, tuning)?;
    let a = la_weights(tuning)?;
    let factor = a
        .iter()
        .zip(&tuning.dual_terms)
        .fold(T::zero(), |m, (&aj, &d)| m.max(T::lit(4.0) * d / aj))
        + T::one();
    let kn = KernelNoise::new(spec, problem)?;
    let n = T::from_count(problem.n());
    let two = T::lit(2.0);
    let mut best: Option<(T, String, TheoremParts<T>)> = None;
    for cand in with_defaults(problem, candidates)? {
        let (_, xd) = approximation_error(problem, &cand.beta)?;
        let kernel = two * kn.at(&xd) / n;
        let v = factor * la_loss(spec, problem, &a, &cand.beta)? + kernel;
        if best.as_ref().map_or(true, |b| v < b.0) {
            let parts = theorem_parts(spec, problem, tuning, &solution.beta, &cand.beta, Some(T::lit(0.5)), &kn)?;
            best = Some((v, cand.label, parts));
        }
    }
    let (rhs, label, parts) = best.expect("at least two candidates");
    let lhs = la_loss(spec, problem, &a, &solution.beta)?;
    Ok(report(
        BoundKind::La,
        lhs,
        Some(T::lit(0.5)),
        label,
        parts,
        factor,
        rhs,
        slack_allowance(problem, tol),
        certified(spec, tuning, solution),
    ))
}

/// Evaluates one bound and decides `lhs ≤ rhs + 10·tol·(1 + ‖Y‖²/n)`.
///
/// Refuses unconverged solutions. A tuning that does not match the estimator's `λ`
/// still yields a report, flagged as not certified.
pub fn check_bound<T: Real>(
    spec: &EstimatorSpec<T>,
    problem: &Problem<T>,
    tuning: &OracleTuning<T>,
    solution: &Solution<T>,
    mode: &BoundMode<T>,
    tol: f64,
) -> Result<BoundReport<T>> {
    if !solution.converged {
        return Err(Error::NotCertifiable(format!(
            "solution did not converge (KKT residual {:e})",
            solution.kkt_residual.to_f64_lossy()
        )));
    }
    let mut rep = match mode {
        BoundMode::Theorem { u, candidate } => theorem_bound(spec, problem, tuning, solution, *u, candidate, tol)?,
        BoundMode::Special1 { candidates } => special1_bound(spec, problem, tuning, solution, candidates, tol)?,
        BoundMode::Special2 => special2_bound(spec, problem, tuning, solution, tol)?,
        BoundMode::La { candidates } => la_sharp_bound(spec, problem, tuning, solution, candidates, tol)?,
    };
    if !tuning_matches(spec, tuning) {
        rep.certified = false;
        rep.note = Some("tuning mismatch: the estimator's λ is not the oracle tuning".into());
    }
    Ok(rep)
}
