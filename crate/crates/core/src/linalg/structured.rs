//! Difference operators for trend filtering and the closed-form `D⁺`.

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;
use crate::real::Real;

/// First-difference matrix `D ∈ R^{p×p}`: `D_ii = −1`, `D_{i,i+1} = 1` for
/// `i < p`, last row zero.
pub fn first_difference<T: Real>(p: usize) -> Result<Matrix<T>> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("difference matrix needs p >= 2, got {p}")));
    }
    Ok(Matrix::from_fn(p, p, |i, j| {
        if i + 1 < p && i == j {
            -T::one()
        } else if i + 1 < p && j == i + 1 {
            T::one()
        } else {
            T::zero()
        }
    }))
}

/// `Dˡ`, the `l`-fold product of the first-difference matrix.
pub fn difference_matrix<T: Real>(p: usize, l: usize) -> Result<Matrix<T>> {
    if l == 0 {
        return Err(Error::InvalidInput("difference order must be >= 1".into()));
    }
    let d = first_difference(p)?;
    let mut m = d.clone();
    for _ in 1..l {
        m = m.matmul(&d)?;
    }
    Ok(m)
}

/// Closed-form Moore-Penrose inverse of the first-difference matrix.
///
/// With 1-based indices: `(j−p)/p` if `i ≤ j < p`, `j/p` if `i > j, j < p`,
/// and `0` in the last column.
pub fn fused_pinv<T: Real>(p: usize) -> Result<Matrix<T>> {
    if p < 2 {
        return Err(Error::InvalidInput(format!("fused pseudoinverse needs p >= 2, got {p}")));
    }
    let pf = T::from_count(p);
    Ok(Matrix::from_fn(p, p, |i0, j0| {
        let (i, j) = (i0 + 1, j0 + 1);
        if j == p {
            T::zero()
        } else if i <= j {
            (T::from_count(j) - pf) / pf
        } else {
            T::from_count(j) / pf
        }
    }))
}
