//! Projection matrices `P_j` with `Σ_j P_j M_j⁺ M_j = I`.

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::decomp::{rank, null_space};
use crate::linalg::matrix::Matrix;
use crate::linalg::pinv::{pseudoinverse, PINV_RTOL};
use crate::real::Real;

/// Relative tolerance of the stacked-rank test for `∩_j Ker(M_j) = {0}`.
pub const KERNEL_RANK_TOL: f64 = 1e-10;

/// Tolerance used when validating constructed projections.
pub const PARTITION_TOL: f64 = 1e-10;

fn check_square<T: Real>(ms: impl Iterator<Item = (usize, (usize, usize))>) -> Result<usize> {
    let mut p = None;
    for (j, (r, c)) in ms {
        if r != c {
            return Err(dim_mismatch("penalty matrix (must be square)", r, format!("{c} columns in term {j}")));
        }
        match p {
            None => p = Some(r),
            Some(p0) if p0 != r => {
                return Err(dim_mismatch("penalty matrix size", p0, format!("{r} in term {j}")))
            }
            _ => {}
        }
    }
    p.ok_or_else(|| Error::InvalidInput("at least one penalty term is required".into()))
}

/// `Σ_j P_j M_j⁺ M_j` given precomputed pseudoinverses.
pub fn partition_sum<T: Real>(ms: &[Matrix<T>], pinvs: &[Matrix<T>], ps: &[Matrix<T>]) -> Result<Matrix<T>> {
    let p = check_square::<T>(ms.iter().map(Matrix::shape).enumerate())?;
    let mut acc = Matrix::zeros(p, p);
    for ((m, mp), pj) in ms.iter().zip(pinvs).zip(ps) {
        if pj.shape() != (p, p) || mp.shape() != (p, p) {
            return Err(dim_mismatch("projection matrix", format!("{p}x{p}"), format!("{:?}", pj.shape())));
        }
        acc = acc.add(&pj.matmul(&mp.matmul(m)?)?)?;
    }
    Ok(acc)
}

/// True iff `‖Σ_j P_j M_j⁺ M_j − I‖_max ≤ tol`.
pub fn verify_partition<T: Real>(terms: &[(Matrix<T>, Matrix<T>)], tol: T) -> Result<bool> {
    let ms: Vec<Matrix<T>> = terms.iter().map(|(m, _)| m.clone()).collect();
    let ps: Vec<Matrix<T>> = terms.iter().map(|(_, p)| p.clone()).collect();
    let pinvs = ms
        .iter()
        .map(|m| pseudoinverse(m, T::lit(PINV_RTOL)))
        .collect::<Result<Vec<_>>>()?;
    let sum = partition_sum(&ms, &pinvs, &ps)?;
    Ok(sum.max_abs_diff(&Matrix::identity(sum.nrows()))? <= tol)
}

/// Orthonormal basis of `∩_j Ker(M_j)`; zero columns when the kernels intersect trivially.
pub fn common_kernel<T: Real>(ms: &[Matrix<T>]) -> Result<Matrix<T>> {
    check_square::<T>(ms.iter().map(Matrix::shape).enumerate())?;
    let refs: Vec<&Matrix<T>> = ms.iter().collect();
    let stacked = Matrix::vstack(&refs)?;
    Ok(null_space(&stacked, T::lit(KERNEL_RANK_TOL)))
}

/// Returns `Ok(())` when the stacked matrix `[M_1; …; M_k]` has full column rank.
pub fn check_trivial_kernel<T: Real>(ms: &[Matrix<T>]) -> Result<()> {
    let p = check_square::<T>(ms.iter().map(Matrix::shape).enumerate())?;
    let covered = if ms.iter().all(Matrix::is_diagonal) {
        (0..p).all(|i| ms.iter().any(|m| m[(i, i)] != T::zero()))
    } else {
        let refs: Vec<&Matrix<T>> = ms.iter().collect();
        rank(&Matrix::vstack(&refs)?, T::lit(KERNEL_RANK_TOL)) == p
    };
    if covered {
        Ok(())
    } else {
        Err(Error::UnsatisfiableAssumption(
            "the penalty matrices have a nontrivial common kernel; some coordinates are not penalized".into(),
        ))
    }
}

/// Default projections for `M_1, …, M_k`.
///
/// Identities when they already satisfy the partition identity (`k = 1`, or
/// mutually orthogonal row spaces). For overlapping diagonal masks each
/// coordinate goes to the lowest-index term covering it. Any other overlap
/// uses `P_j = (Σ_i M_i⁺ M_i)⁻¹`.
pub fn default_projections<T: Real>(ms: &[Matrix<T>]) -> Result<Vec<Matrix<T>>> {
    let p = check_square::<T>(ms.iter().map(Matrix::shape).enumerate())?;
    check_trivial_kernel(ms)?;
    let tol = T::lit(PARTITION_TOL);
    let pinvs = ms
        .iter()
        .map(|m| pseudoinverse(m, T::lit(PINV_RTOL)))
        .collect::<Result<Vec<_>>>()?;
    let identities = vec![Matrix::identity(p); ms.len()];
    if partition_sum(ms, &pinvs, &identities)?.max_abs_diff(&Matrix::identity(p))? <= tol {
        return Ok(identities);
    }
    let ps = if ms.iter().all(Matrix::is_diagonal) {
        let mut diag = vec![vec![T::zero(); p]; ms.len()];
        for i in 0..p {
            let owner = ms
                .iter()
                .position(|m| m[(i, i)] != T::zero())
                .expect("coverage checked above");
            diag[owner][i] = T::one();
        }
        diag.iter().map(|d| Matrix::from_diag(d)).collect()
    } else {
        let projector_sum = partition_sum(ms, &pinvs, &identities)?;
        let inv = pseudoinverse(&projector_sum, T::lit(PINV_RTOL))?;
        vec![inv; ms.len()]
    };
    if partition_sum(ms, &pinvs, &ps)?.max_abs_diff(&Matrix::identity(p))? > tol {
        return Err(Error::UnsatisfiableAssumption(
            "could not construct projections satisfying the partition identity".into(),
        ));
    }
    Ok(ps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(p: usize, idx: &[usize]) -> Matrix<f64> {
        Matrix::from_fn(p, p, |i, j| if i == j && idx.contains(&i) { 1.0 } else { 0.0 })
    }

    #[test]
    fn identity_partition() {
        let i = Matrix::<f64>::identity(4);
        assert!(verify_partition(&[(i.clone(), i.clone())], 1e-12).unwrap());
        assert_eq!(default_projections(&[i.clone()]).unwrap(), vec![i]);
    }

    #[test]
    fn disjoint_groups_use_identities() {
        let i = Matrix::<f64>::identity(4);
        let (a, b) = (mask(4, &[0, 1]), mask(4, &[2, 3]));
        assert!(verify_partition(&[(a.clone(), i.clone()), (b.clone(), i.clone())], 1e-12).unwrap());
        assert_eq!(default_projections(&[a, b]).unwrap(), vec![i.clone(), i]);
    }

    #[test]
    fn overlapping_groups_by_hand() {
        // groups {1,2}, {2,3}: Σ I M_j⁺ M_j = diag(1, 2, 1) ≠ I.
        let i = Matrix::<f64>::identity(3);
        let (a, b) = (mask(3, &[0, 1]), mask(3, &[1, 2]));
        assert!(!verify_partition(&[(a.clone(), i.clone()), (b.clone(), i.clone())], 1e-10).unwrap());
        let ps = default_projections(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(ps[0], Matrix::from_diag(&[1.0, 1.0, 0.0]));
        assert_eq!(ps[1], Matrix::from_diag(&[0.0, 0.0, 1.0]));
        assert!(verify_partition(&[(a, ps[0].clone()), (b, ps[1].clone())], 1e-10).unwrap());
    }

    #[test]
    fn uncovered_coordinate_is_rejected() {
        let err = default_projections(&[mask(3, &[0, 1])]).unwrap_err();
        assert!(matches!(err, Error::UnsatisfiableAssumption(_)));
        let d = crate::linalg::difference_matrix::<f64>(4, 1).unwrap();
        assert!(matches!(default_projections(&[d]), Err(Error::UnsatisfiableAssumption(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let i3 = Matrix::<f64>::identity(3);
        let i2 = Matrix::<f64>::identity(2);
        assert!(matches!(
            verify_partition(&[(i3.clone(), i3), (i2.clone(), i2)], 1e-10),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn general_overlap_uses_inverse_projector_sum() {
        let d = crate::linalg::difference_matrix::<f64>(3, 1).unwrap();
        let e = Matrix::from_rows(&[vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let ps = default_projections(&[d.clone(), e.clone()]).unwrap();
        assert!(verify_partition(&[(d, ps[0].clone()), (e, ps[1].clone())], 1e-10).unwrap());
    }
}
