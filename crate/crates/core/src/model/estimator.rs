use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{difference_matrix, vector, Matrix, NormExponent};
use crate::model::link::LinkFunction;
use crate::model::penalty::{PenaltySpec, TermNorm};
use crate::model::problem::{Problem, Truth};
use crate::real::Real;

/// Which design matrices an estimator accepts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignRequirement {
    Any,
    /// Trend filtering: `X` must be the identity.
    Identity,
}

/// `β̂ ∈ argmin g(‖Y − Xβ‖²) + Σ_j λ_j ‖M_j β‖_{q_j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatorSpec<T> {
    pub name: String,
    pub link: LinkFunction,
    pub penalty: PenaltySpec<T>,
    pub design: DesignRequirement,
}

impl<T: Real> EstimatorSpec<T> {
    pub fn new(name: impl Into<String>, link: LinkFunction, penalty: PenaltySpec<T>) -> Self {
        EstimatorSpec { name: name.into(), link, penalty, design: DesignRequirement::Any }
    }

    pub fn p(&self) -> usize {
        self.penalty.dim()
    }

    pub fn with_lambdas(&self, lambdas: &[T]) -> Result<Self> {
        Ok(EstimatorSpec { penalty: self.penalty.with_lambdas(lambdas)?, ..self.clone() })
    }

    /// Dimension and design checks against a problem.
    pub fn check_problem(&self, problem: &Problem<T>) -> Result<()> {
        if problem.p() != self.p() {
            return Err(dim_mismatch("design columns vs penalty dimension", self.p(), problem.p()));
        }
        if self.design == DesignRequirement::Identity && problem.x != Matrix::identity(self.p()) {
            return Err(Error::InvalidInput(format!("{} requires the identity design X = I", self.name)));
        }
        Ok(())
    }
}

/// `g(‖Y − Xβ‖²) + Σ_j λ_j ‖M_j β‖_{q_j}`.
pub fn objective<T: Real>(spec: &EstimatorSpec<T>, problem: &Problem<T>, beta: &[T]) -> Result<T> {
    spec.check_problem(problem)?;
    problem.check_beta(beta)?;
    let rss = vector::norm2_sq(&problem.residual(beta));
    Ok(spec.link.value(rss) + spec.penalty.value(beta))
}

fn l1<T>() -> TermNorm<T> {
    TermNorm::Lq(NormExponent::ONE)
}

fn l2<T>() -> TermNorm<T> {
    TermNorm::Lq(NormExponent::TWO)
}

fn check_p(p: usize) -> Result<()> {
    if p == 0 {
        return Err(Error::InvalidInput("dimension p must be at least 1".into()));
    }
    Ok(())
}

/// `‖Y − Xβ‖² + λ‖β‖₁`.
pub fn make_lasso<T: Real>(p: usize, lambda: T) -> Result<EstimatorSpec<T>> {
    check_p(p)?;
    let pen = PenaltySpec::new(vec![(Matrix::identity(p), l1(), lambda)])?;
    Ok(EstimatorSpec::new("lasso", LinkFunction::Identity, pen))
}

/// `‖Y − Xβ‖ + λ‖β‖₁`.
pub fn make_sqrt_lasso<T: Real>(p: usize, lambda: T) -> Result<EstimatorSpec<T>> {
    check_p(p)?;
    let pen = PenaltySpec::new(vec![(Matrix::identity(p), l1(), lambda)])?;
    Ok(EstimatorSpec::new("sqrt-lasso", LinkFunction::SquareRoot, pen))
}

/// Lasso with one tuning parameter per coordinate (`k = p` singleton terms).
pub fn make_tailored_lasso<T: Real>(lambdas: &[T]) -> Result<EstimatorSpec<T>> {
    let p = lambdas.len();
    check_p(p)?;
    let terms = (0..p)
        .map(|i| (Matrix::from_fn(p, p, |r, c| if r == i && c == i { T::one() } else { T::zero() }), l1(), lambdas[i]))
        .collect();
    Ok(EstimatorSpec::new("tailored-lasso", LinkFunction::Identity, PenaltySpec::new(terms)?))
}

/// Group lasso `Σ_j λ_j ‖β_{G_j}‖₂` over 0-based index groups.
///
/// `lambdas` holds either one shared value or one value per group.
pub fn make_group_lasso<T: Real>(
    p: usize,
    groups: &[Vec<usize>],
    lambdas: &[T],
    link: LinkFunction,
) -> Result<EstimatorSpec<T>> {
    check_p(p)?;
    if groups.is_empty() {
        return Err(Error::InvalidInput("at least one group is required".into()));
    }
    let lambdas: Vec<T> = match lambdas.len() {
        1 => vec![lambdas[0]; groups.len()],
        k if k == groups.len() => lambdas.to_vec(),
        k => return Err(dim_mismatch("group tuning parameters", groups.len(), k)),
    };
    let mut terms = Vec::with_capacity(groups.len());
    for (g, &lambda) in groups.iter().zip(&lambdas) {
        if g.is_empty() {
            return Err(Error::InvalidInput("groups must be nonempty".into()));
        }
        if let Some(&i) = g.iter().find(|&&i| i >= p) {
            return Err(Error::InvalidInput(format!("group index {i} out of range for p = {p}")));
        }
        let m = Matrix::from_fn(p, p, |r, c| if r == c && g.contains(&r) { T::one() } else { T::zero() });
        terms.push((m, l2(), lambda));
    }
    let name = match link {
        LinkFunction::Identity => "group-lasso",
        LinkFunction::SquareRoot => "group-sqrt-lasso",
    };
    Ok(EstimatorSpec::new(name, link, PenaltySpec::new(terms)?))
}

/// Fused lasso `‖Y − Xβ‖² + λ‖Dβ‖₁`; constants are left unpenalized.
pub fn make_fused<T: Real>(p: usize, lambda: T) -> Result<EstimatorSpec<T>> {
    let d = difference_matrix(p, 1)?;
    let pen = PenaltySpec::with_free_kernel(vec![(d, l1(), lambda)])?;
    Ok(EstimatorSpec::new("fused", LinkFunction::Identity, pen))
}

/// Trend filtering `‖Y − β‖² + λ‖Dˡβ‖₁` for `l ∈ {1, 2, 3}`; requires `X = I`.
pub fn make_trend_filter<T: Real>(p: usize, l: usize, lambda: T) -> Result<EstimatorSpec<T>> {
    if !(1..=3).contains(&l) {
        return Err(Error::InvalidInput(format!("trend filtering order must be 1, 2 or 3, got {l}")));
    }
    let m = difference_matrix(p, l)?;
    let pen = PenaltySpec::with_free_kernel(vec![(m, l1(), lambda)])?;
    let mut spec = EstimatorSpec::new("trend-filter", LinkFunction::Identity, pen);
    spec.design = DesignRequirement::Identity;
    Ok(spec)
}

/// Slope `‖Y − Xβ‖² + λ Σ_i ω_i |β|_(i)` (or its square-root-link analogue).
pub fn make_slope<T: Real>(weights: Vec<T>, lambda: T, link: LinkFunction) -> Result<EstimatorSpec<T>> {
    let p = weights.len();
    check_p(p)?;
    let pen = PenaltySpec::new(vec![(Matrix::identity(p), TermNorm::SortedL1(weights), lambda)])?;
    Ok(EstimatorSpec::new("slope", link, pen))
}

/// Elastic net `‖Y − Xβ‖² + λ₁‖β‖₁ + λ₂‖β‖²` written as a lasso on `[X; √λ₂ I]`, `[Y; 0]`.
///
/// With ground truth present the augmented noise is `[ε; −√λ₂ β*]`. The
/// returned problem keeps the original `n` for normalization.
pub fn make_elastic_net_augmented<T: Real>(
    problem: &Problem<T>,
    lambda1: T,
    lambda2: T,
) -> Result<(EstimatorSpec<T>, Problem<T>)> {
    if !(lambda2 >= T::zero()) || !lambda2.is_finite() {
        return Err(Error::InvalidInput(format!("lambda2 must be finite and nonnegative, got {lambda2}")));
    }
    let p = problem.p();
    let mut spec = make_lasso(p, lambda1)?;
    spec.name = "elastic-net".into();
    let root = lambda2.sqrt();
    let x = Matrix::vstack(&[&problem.x, &Matrix::identity(p).scale(root)])?;
    let mut y = problem.y.clone();
    y.extend(std::iter::repeat(T::zero()).take(p));
    let mut aug = Problem::new(x, y)?.with_seed(problem.seed).with_sample_size(problem.n())?;
    if let Some(t) = &problem.truth {
        let mut eps = t.eps.clone();
        eps.extend(t.beta_star.iter().map(|&b| -root * b));
        aug.truth = Some(Truth { beta_star: t.beta_star.clone(), eps });
    }
    Ok((spec, aug))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Problem<f64> {
        Problem::new(Matrix::identity(2), vec![1.0, 0.0]).unwrap()
    }

    #[test]
    fn objective_examples() {
        let prob = toy();
        assert_eq!(objective(&make_lasso(2, 2.0).unwrap(), &prob, &[0.0, 0.0]).unwrap(), 1.0);
        let sq = Problem::new(Matrix::identity(2), vec![3.0, 4.0]).unwrap();
        assert_eq!(objective(&make_sqrt_lasso(2, 2.0).unwrap(), &sq, &[0.0, 0.0]).unwrap(), 5.0);
        assert_eq!(objective(&make_lasso(2, 2.0).unwrap(), &prob, &[1.0, 0.0]).unwrap(), 2.0);
        assert!(objective(&make_lasso(3, 2.0).unwrap(), &prob, &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn catalog_shapes() {
        let lasso = make_lasso::<f64>(3, 1.0).unwrap();
        assert_eq!(lasso.penalty.len(), 1);
        assert_eq!(lasso.penalty.terms()[0].m.as_ref(), &Matrix::identity(3));
        assert_eq!(lasso.penalty.terms()[0].projection.as_ref(), &Matrix::identity(3));

        let group = make_group_lasso::<f64>(3, &[vec![0, 1], vec![2]], &[1.0], LinkFunction::Identity).unwrap();
        assert_eq!(group.penalty.len(), 2);
        for t in group.penalty.terms() {
            assert!(t.m.is_diagonal() && t.m.is_indicator());
            assert_eq!(t.norm, TermNorm::Lq(NormExponent::TWO));
            assert_eq!(t.projection.as_ref(), &Matrix::identity(3));
        }

        let fused = make_fused::<f64>(3, 1.0).unwrap();
        assert_eq!(fused.penalty.terms()[0].m.as_ref(), &difference_matrix(3, 1).unwrap());
        assert_eq!(fused.penalty.terms()[0].norm, TermNorm::Lq(NormExponent::ONE));

        assert!(make_trend_filter::<f64>(5, 4, 1.0).is_err());
        assert!(make_trend_filter::<f64>(5, 2, 1.0).is_ok());
    }

    #[test]
    fn groups_must_cover() {
        let err = make_group_lasso::<f64>(3, &[vec![0, 1]], &[1.0], LinkFunction::Identity).unwrap_err();
        assert!(matches!(err, Error::UnsatisfiableAssumption(_)));
    }

    #[test]
    fn trend_filter_needs_identity_design() {
        let spec = make_trend_filter::<f64>(3, 1, 1.0).unwrap();
        let x = Matrix::from_fn(3, 3, |i, j| if i == j { 2.0 } else { 0.0 });
        let prob = Problem::new(x, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(spec.check_problem(&prob).is_err());
        let prob = Problem::new(Matrix::identity(3), vec![1.0, 2.0, 3.0]).unwrap();
        assert!(spec.check_problem(&prob).is_ok());
    }

    #[test]
    fn elastic_net_augmentation() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let beta = vec![1.0, -2.0];
        let eps = vec![0.1, -0.3, 0.2];
        let prob = Problem::from_truth(x.clone(), beta.clone(), eps.clone()).unwrap();

        let (_, same) = make_elastic_net_augmented(&prob, 1.0, 0.0).unwrap();
        assert_eq!(same.rows(), 5);
        assert_eq!(same.x.select_rows(&[3, 4]), Matrix::zeros(2, 2));

        let (spec, aug) = make_elastic_net_augmented(&prob, 1.0, 4.0).unwrap();
        assert_eq!(spec.penalty.len(), 1);
        assert_eq!(aug.x.row(3), &[2.0, 0.0]);
        assert_eq!(aug.x.row(4), &[0.0, 2.0]);
        assert_eq!(aug.n(), 3);
        let t = aug.truth.as_ref().unwrap();
        let lhs = aug.x.tr_matvec(&t.eps);
        let rhs = vector::sub(&x.tr_matvec(&eps), &vector::scale(&beta, 4.0));
        assert!(vector::max_abs(&vector::sub(&lhs, &rhs)) < 1e-14);
        let b = [0.3f64, 0.7];
        let aug_rss = vector::norm2_sq(&aug.residual(&b));
        let direct = vector::norm2_sq(&prob.residual(&b)) + 4.0 * vector::norm2_sq(&b);
        assert!((aug_rss - direct).abs() < 1e-13);
    }
}
