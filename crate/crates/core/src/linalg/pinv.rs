use crate::error::{Error, Result};
use crate::linalg::decomp::svd;
use crate::linalg::matrix::Matrix;
use crate::real::Real;

/// Default relative singular-value cutoff for pseudoinverses.
pub const PINV_RTOL: f64 = 1e-12;

/// Moore-Penrose pseudoinverse. Singular values below `tol · σ_max` are
/// treated as zero.
pub fn pseudoinverse<T: Real>(a: &Matrix<T>, tol: T) -> Result<Matrix<T>> {
    if !a.is_finite() {
        return Err(Error::InvalidInput("pseudoinverse of a non-finite matrix".into()));
    }
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput("pseudoinverse tolerance must be positive".into()));
    }
    if a.is_diagonal() {
        let d = a.diagonal();
        let dmax = d.iter().fold(T::zero(), |m, &x| m.max(x.abs()));
        let inv: Vec<T> = d
            .iter()
            .map(|&x| {
                if dmax > T::zero() && x.abs() > tol * dmax {
                    x.recip()
                } else {
                    T::zero()
                }
            })
            .collect();
        return Ok(Matrix::from_diag(&inv));
    }
    let dec = svd(a);
    let smax = dec.s.first().copied().unwrap_or(T::zero());
    let (m, n) = a.shape();
    let mut out = Matrix::zeros(n, m);
    if smax == T::zero() {
        return Ok(out);
    }
    for (k, &s) in dec.s.iter().enumerate() {
        if s <= tol * smax {
            continue;
        }
        let inv = s.recip();
        for i in 0..n {
            let vik = dec.v[(i, k)] * inv;
            if vik == T::zero() {
                continue;
            }
            for j in 0..m {
                out[(i, j)] = out[(i, j)] + vik * dec.u[(j, k)];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_cases() {
        let i3 = Matrix::<f64>::identity(3);
        assert_eq!(pseudoinverse(&i3, 1e-12).unwrap(), i3);
        let z = Matrix::<f64>::zeros(2, 2);
        assert_eq!(pseudoinverse(&z, 1e-12).unwrap(), z);
        let bad = Matrix::from_fn(2, 2, |_, _| f64::INFINITY);
        assert!(pseudoinverse(&bad, 1e-12).is_err());
    }

    #[test]
    fn rank_one_example() {
        // [1 2; 2 4]⁺ = A / 25
        let a = Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap();
        let p = pseudoinverse(&a, 1e-12).unwrap();
        assert!(p.max_abs_diff(&a.scale(1.0 / 25.0)).unwrap() < 1e-14);
    }
}
