use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{
    check_trivial_kernel, common_kernel, default_projections, partition_sum, pseudoinverse,
    sorted_l1_dual, sorted_l1_norm, svd, Matrix, NormExponent, PARTITION_TOL, PINV_RTOL,
};
use crate::real::Real;

/// The norm applied to `M_j β` in one penalty term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermNorm<T> {
    Lq(NormExponent),
    /// Sorted-ℓ1 norm with non-increasing positive weights (slope).
    SortedL1(Vec<T>),
}

impl<T: Real> TermNorm<T> {
    pub fn norm(&self, v: &[T]) -> T {
        match self {
            TermNorm::Lq(q) => q.norm(v),
            TermNorm::SortedL1(w) => sorted_l1_norm(v, w),
        }
    }

    pub fn dual_norm(&self, v: &[T]) -> T {
        match self {
            TermNorm::Lq(q) => q.dual_norm(v),
            TermNorm::SortedL1(w) => sorted_l1_dual(v, w),
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if let TermNorm::SortedL1(w) = self {
            if w.len() != p {
                return Err(dim_mismatch("sorted-l1 weights", p, w.len()));
            }
            if w.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
                return Err(Error::InvalidInput("sorted-l1 weights must be positive and finite".into()));
            }
            if w.windows(2).any(|pair| pair[1] > pair[0]) {
                return Err(Error::InvalidInput("sorted-l1 weights must be non-increasing".into()));
            }
        }
        Ok(())
    }
}

/// One summand `λ_j ‖M_j β‖` together with its projection `P_j`.
///
/// The matrices are shared so that retuning a penalty does not copy them.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltyTerm<T> {
    pub m: Arc<Matrix<T>>,
    pub norm: TermNorm<T>,
    pub projection: Arc<Matrix<T>>,
    pub lambda: T,
}

/// How the solvers may exploit the penalty's structure.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Structure {
    /// Disjoint diagonal 0/1 masks with ℓ1 or ℓ2 norms; `blocks[j]` lists the coordinates of term `j`.
    Separable { blocks: Vec<Vec<usize>> },
    /// A single sorted-ℓ1 term with `M = I`.
    SortedL1,
    General,
}

/// Composite penalty `Σ_j λ_j ‖M_j β‖_{q_j}`.
///
/// When the penalty matrices share a nontrivial kernel (fused lasso, trend
/// filtering) the orthonormal basis `N` of that kernel is kept and the
/// projections satisfy `Σ_j P_j M_j⁺ M_j = I − N Nᵀ` instead of `I`.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaltySpec<T> {
    terms: Vec<PenaltyTerm<T>>,
    pinvs: Vec<Arc<Matrix<T>>>,
    kernel: Option<Arc<Matrix<T>>>,
    structure: Structure,
    spectral: Vec<T>,
}

fn validate_terms<T: Real>(terms: &[(Matrix<T>, TermNorm<T>, T)]) -> Result<usize> {
    let p = terms
        .first()
        .ok_or_else(|| Error::InvalidInput("a penalty needs at least one term".into()))?
        .0
        .nrows();
    for (j, (m, norm, lambda)) in terms.iter().enumerate() {
        if m.shape() != (p, p) {
            return Err(dim_mismatch("penalty matrix", format!("{p}x{p}"), format!("{:?} in term {j}", m.shape())));
        }
        if !m.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite penalty matrix in term {j}")));
        }
        if !(*lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidInput(format!("tuning parameter of term {j} must be positive and finite, got {lambda}")));
        }
        norm.validate(p)?;
        if matches!(norm, TermNorm::SortedL1(_)) && *m != Matrix::identity(p) {
            return Err(Error::Unsupported("sorted-l1 terms require M = I".into()));
        }
    }
    Ok(p)
}

fn detect_structure<T: Real>(terms: &[PenaltyTerm<T>], kernel: &Option<Matrix<T>>) -> Structure {
    if kernel.is_some() {
        return Structure::General;
    }
    if terms.len() == 1 && matches!(terms[0].norm, TermNorm::SortedL1(_)) {
        return Structure::SortedL1;
    }
    let p = terms[0].m.nrows();
    let mut owner = vec![false; p];
    let mut blocks = Vec::with_capacity(terms.len());
    for t in terms {
        let simple_norm = matches!(t.norm, TermNorm::Lq(q) if q.is_one() || q.is_two());
        if !simple_norm || !t.m.is_diagonal() || !t.m.is_indicator() {
            return Structure::General;
        }
        let block = t.m.nonzero_rows();
        for &i in &block {
            if owner[i] {
                return Structure::General;
            }
            owner[i] = true;
        }
        blocks.push(block);
    }
    Structure::Separable { blocks }
}

fn pinvs_of<T: Real>(ms: &[Matrix<T>]) -> Result<Vec<Matrix<T>>> {
    ms.iter().map(|m| pseudoinverse(m, T::lit(PINV_RTOL))).collect()
}

impl<T: Real> PenaltySpec<T> {
    /// Builds a penalty with default projections; the kernels of the `M_j` must intersect trivially.
    pub fn new(terms: Vec<(Matrix<T>, TermNorm<T>, T)>) -> Result<Self> {
        validate_terms(&terms)?;
        let ms: Vec<Matrix<T>> = terms.iter().map(|t| t.0.clone()).collect();
        let ps = default_projections(&ms)?;
        let pinvs = pinvs_of(&ms)?;
        Ok(Self::assemble(terms, ps, pinvs, None))
    }

    /// Builds a penalty whose matrices may leave a common kernel unpenalized.
    ///
    /// Projections are identities when they already satisfy the reduced
    /// partition identity and `S⁺` with `S = Σ_j M_j⁺ M_j` otherwise.
    pub fn with_free_kernel(terms: Vec<(Matrix<T>, TermNorm<T>, T)>) -> Result<Self> {
        let p = validate_terms(&terms)?;
        let ms: Vec<Matrix<T>> = terms.iter().map(|t| t.0.clone()).collect();
        let n = common_kernel(&ms)?;
        if n.ncols() == 0 {
            return Self::new(terms);
        }
        if n.ncols() == p {
            return Err(Error::UnsatisfiableAssumption("every penalty matrix is zero".into()));
        }
        let pinvs = pinvs_of(&ms)?;
        let target = Matrix::identity(p).sub(&n.matmul(&n.transpose())?)?;
        let identities = vec![Matrix::identity(p); ms.len()];
        let s = partition_sum(&ms, &pinvs, &identities)?;
        let ps = if s.max_abs_diff(&target)? <= T::lit(PARTITION_TOL) {
            identities
        } else {
            vec![pseudoinverse(&s, T::lit(PINV_RTOL))?; ms.len()]
        };
        if partition_sum(&ms, &pinvs, &ps)?.max_abs_diff(&target)? > T::lit(PARTITION_TOL) {
            return Err(Error::UnsatisfiableAssumption(
                "could not construct projections for the penalized subspace".into(),
            ));
        }
        Ok(Self::assemble(terms, ps, pinvs, Some(n)))
    }

    /// Uses caller-supplied projections, which must satisfy the partition identity.
    pub fn with_projections(terms: Vec<(Matrix<T>, TermNorm<T>, T)>, ps: Vec<Matrix<T>>) -> Result<Self> {
        let p = validate_terms(&terms)?;
        if ps.len() != terms.len() {
            return Err(dim_mismatch("projection count", terms.len(), ps.len()));
        }
        let ms: Vec<Matrix<T>> = terms.iter().map(|t| t.0.clone()).collect();
        check_trivial_kernel(&ms)?;
        let pinvs = pinvs_of(&ms)?;
        if ps.iter().any(|m| m.shape() != (p, p)) {
            return Err(dim_mismatch("projection matrix", format!("{p}x{p}"), "other shape"));
        }
        if partition_sum(&ms, &pinvs, &ps)?.max_abs_diff(&Matrix::identity(p))? > T::lit(PARTITION_TOL) {
            return Err(Error::InvalidInput("projections violate Σ P_j M_j⁺ M_j = I".into()));
        }
        Ok(Self::assemble(terms, ps, pinvs, None))
    }

    fn assemble(
        terms: Vec<(Matrix<T>, TermNorm<T>, T)>,
        ps: Vec<Matrix<T>>,
        pinvs: Vec<Matrix<T>>,
        kernel: Option<Matrix<T>>,
    ) -> Self {
        let terms: Vec<PenaltyTerm<T>> = terms
            .into_iter()
            .zip(ps)
            .map(|((m, norm, lambda), projection)| PenaltyTerm {
                m: Arc::new(m),
                norm,
                projection: Arc::new(projection),
                lambda,
            })
            .collect();
        let structure = detect_structure(&terms, &kernel);
        let pinvs = pinvs.into_iter().map(Arc::new).collect();
        let kernel = kernel.map(Arc::new);
        let spectral = terms
            .iter()
            .map(|t| svd(&t.m).s.first().copied().unwrap_or(T::zero()))
            .collect();
        PenaltySpec { terms, pinvs, kernel, structure, spectral }
    }

    pub fn dim(&self) -> usize {
        self.terms[0].m.nrows()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[PenaltyTerm<T>] {
        &self.terms
    }

    /// Cached `M_j⁺`.
    pub fn pinv(&self, j: usize) -> &Matrix<T> {
        &self.pinvs[j]
    }

    /// Orthonormal basis of the unpenalized common kernel, if nontrivial.
    pub fn kernel(&self) -> Option<&Matrix<T>> {
        self.kernel.as_deref()
    }

    /// Largest singular value of `M_j`.
    pub fn spectral_norm(&self, j: usize) -> T {
        self.spectral[j]
    }

    pub fn structure(&self) -> &Structure {
        &self.structure
    }

    pub fn lambdas(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.lambda).collect()
    }

    /// Same penalty with new tuning parameters.
    pub fn with_lambdas(&self, lambdas: &[T]) -> Result<Self> {
        if lambdas.len() != self.terms.len() {
            return Err(dim_mismatch("tuning vector", self.terms.len(), lambdas.len()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > T::zero()) || !l.is_finite()) {
            return Err(Error::InvalidInput(format!("tuning parameters must be positive and finite, got {l}")));
        }
        let mut out = self.clone();
        for (t, &l) in out.terms.iter_mut().zip(lambdas) {
            t.lambda = l;
        }
        Ok(out)
    }

    /// `‖M_j β‖` for every term.
    pub fn term_norms(&self, beta: &[T]) -> Vec<T> {
        self.terms.iter().map(|t| t.norm.norm(&t.m.matvec(beta))).collect()
    }

    /// `Σ_j λ_j ‖M_j β‖`.
    pub fn value(&self, beta: &[T]) -> T {
        self.terms
            .iter()
            .zip(self.term_norms(beta))
            .map(|(t, v)| t.lambda * v)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::difference_matrix;

    fn l1() -> TermNorm<f64> {
        TermNorm::Lq(NormExponent::ONE)
    }

    #[test]
    fn rejects_bad_lambda_and_weights() {
        let i = Matrix::<f64>::identity(2);
        assert!(PenaltySpec::new(vec![(i.clone(), l1(), 0.0)]).is_err());
        assert!(PenaltySpec::new(vec![(i.clone(), TermNorm::SortedL1(vec![1.0, 2.0]), 1.0)]).is_err());
        assert!(PenaltySpec::new(vec![(i, TermNorm::SortedL1(vec![2.0, 1.0]), 1.0)]).is_ok());
    }

    #[test]
    fn structure_detection() {
        let i = Matrix::<f64>::identity(3);
        let spec = PenaltySpec::new(vec![(i.clone(), l1(), 1.0)]).unwrap();
        assert_eq!(spec.structure(), &Structure::Separable { blocks: vec![vec![0, 1, 2]] });
        let d = difference_matrix::<f64>(3, 1).unwrap();
        let fused = PenaltySpec::with_free_kernel(vec![(d, l1(), 1.0)]).unwrap();
        assert_eq!(fused.structure(), &Structure::General);
        assert_eq!(fused.kernel().unwrap().ncols(), 1);
        assert_eq!(fused.terms()[0].projection.as_ref(), &i);
    }

    #[test]
    fn fused_requires_free_kernel() {
        let d = difference_matrix::<f64>(4, 1).unwrap();
        assert!(matches!(
            PenaltySpec::new(vec![(d, l1(), 1.0)]),
            Err(Error::UnsatisfiableAssumption(_))
        ));
    }

    #[test]
    fn value_and_relambda() {
        let i = Matrix::<f64>::identity(2);
        let spec = PenaltySpec::new(vec![(i, l1(), 2.0)]).unwrap();
        assert_eq!(spec.value(&[1.0, -1.0]), 4.0);
        let spec = spec.with_lambdas(&[3.0]).unwrap();
        assert_eq!(spec.value(&[1.0, -1.0]), 6.0);
        assert!(spec.with_lambdas(&[1.0, 2.0]).is_err());
    }
}
