//! Jacobi SVD, symmetric Jacobi eigendecomposition and Cholesky.

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;
use crate::linalg::vector::{dot, norm2, norm2_sq};
use crate::real::Real;

const MAX_SWEEPS: usize = 100;

/// Thin singular value decomposition `A = U diag(s) Vᵀ` with `s` sorted decreasingly.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub s: Vec<T>,
    pub v: Matrix<T>,
}

/// One-sided (Hestenes) Jacobi on the columns of a tall matrix; returns the
/// column-major working set, the singular values and the full `V`.
fn jacobi_tall<T: Real>(a: &Matrix<T>) -> (Vec<Vec<T>>, Vec<T>, Vec<Vec<T>>) {
    let (_, n) = a.shape();
    let mut cols: Vec<Vec<T>> = (0..n).map(|j| a.column(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    let mut sq: Vec<T> = cols.iter().map(|c| norm2_sq(c)).collect();
    // Pairs this far below the overall scale are treated as already orthogonal.
    let floor = eps * eps * sq.iter().fold(T::zero(), |acc, &x| acc + x);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let (alpha, beta) = (sq[i], sq[j]);
                let gamma = dot(&cols[i], &cols[j]);
                if gamma.abs() <= eps * (alpha * beta).sqrt() || gamma.abs() <= floor {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let sgn = if zeta >= T::zero() { T::one() } else { -T::one() };
                let t = sgn / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = (T::one() + t * t).sqrt().recip();
                let s = c * t;
                rotate(&mut cols, i, j, c, s);
                rotate(&mut v, i, j, c, s);
                sq[i] = (alpha - t * gamma).max(T::zero());
                sq[j] = beta + t * gamma;
            }
        }
        if !rotated {
            break;
        }
        for (q, c) in sq.iter_mut().zip(&cols) {
            *q = norm2_sq(c);
        }
    }
    let sv = cols.iter().map(|c| norm2(c)).collect();
    (cols, sv, v)
}

fn rotate<T: Real>(cols: &mut [Vec<T>], i: usize, j: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(j);
    let (ci, cj) = (&mut left[i], &mut right[0]);
    for (x, y) in ci.iter_mut().zip(cj.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

fn order_desc<T: Real>(s: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..s.len()).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap_or(std::cmp::Ordering::Equal));
    idx
}

fn svd_tall<T: Real>(a: &Matrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    let (cols, s, v) = jacobi_tall(a);
    let order = order_desc(&s);
    let u = Matrix::from_fn(m, n, |i, k| {
        let j = order[k];
        if s[j] > T::zero() {
            cols[j][i] / s[j]
        } else {
            T::zero()
        }
    });
    let vm = Matrix::from_fn(n, n, |i, k| v[order[k]][i]);
    Svd {
        u,
        s: order.iter().map(|&j| s[j]).collect(),
        v: vm,
    }
}

/// Thin SVD of an arbitrary matrix (`r = min(m, n)` singular triplets).
pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    if a.nrows() >= a.ncols() {
        svd_tall(a)
    } else {
        let t = svd_tall(&a.transpose());
        Svd {
            u: t.v,
            s: t.s,
            v: t.u,
        }
    }
}

/// Numerical rank: singular values above `tol · σ_max`.
pub fn rank<T: Real>(a: &Matrix<T>, tol: T) -> usize {
    let s = svd(a).s;
    let smax = s.first().copied().unwrap_or(T::zero());
    if smax == T::zero() {
        return 0;
    }
    s.iter().filter(|&&x| x > tol * smax).count()
}

/// Orthonormal basis (as columns) of `Ker(A)`, using the relative cutoff `tol`.
pub fn null_space<T: Real>(a: &Matrix<T>, tol: T) -> Matrix<T> {
    let (m, n) = a.shape();
    let padded;
    let tall = if m >= n {
        a
    } else {
        padded = Matrix::vstack(&[a, &Matrix::zeros(n - m, n)]).expect("equal column counts");
        &padded
    };
    let (_, s, v) = jacobi_tall(tall);
    let smax = s.iter().fold(T::zero(), |acc, &x| acc.max(x));
    let keep: Vec<usize> = (0..n)
        .filter(|&j| smax == T::zero() || s[j] <= tol * smax)
        .collect();
    Matrix::from_fn(n, keep.len(), |i, k| v[keep[k]][i])
}

/// Basis of `Ker(A)` read off the reduced row echelon form (partial pivoting,
/// entries below `tol · max|A|` count as zero). The basis is not orthonormal:
/// each vector has a unit entry on one free column.
pub fn null_space_rref<T: Real>(a: &Matrix<T>, tol: T) -> Matrix<T> {
    let (m, n) = a.shape();
    let mut r = a.clone();
    let cutoff = tol * r.max_abs();
    let mut pivots: Vec<usize> = Vec::new();
    let mut row = 0;
    for col in 0..n {
        if row == m {
            break;
        }
        let (best, val) = (row..m)
            .map(|i| (i, r[(i, col)].abs()))
            .fold((row, -T::one()), |acc, x| if x.1 > acc.1 { x } else { acc });
        if val <= cutoff {
            for i in row..m {
                r[(i, col)] = T::zero();
            }
            continue;
        }
        r.swap_rows(row, best);
        let piv = r[(row, col)];
        for k in col..n {
            r[(row, k)] = r[(row, k)] / piv;
        }
        for i in 0..m {
            let f = r[(i, col)];
            if i == row || f == T::zero() {
                continue;
            }
            for k in col..n {
                let v = r[(row, k)];
                r[(i, k)] = r[(i, k)] - f * v;
            }
        }
        pivots.push(col);
        row += 1;
    }
    let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
    let mut basis = Matrix::zeros(n, free.len());
    for (k, &f) in free.iter().enumerate() {
        basis[(f, k)] = T::one();
        for (i, &pc) in pivots.iter().enumerate() {
            basis[(pc, k)] = -r[(i, f)];
        }
    }
    basis
}

/// Symmetric eigendecomposition by cyclic Jacobi: returns `(eigenvalues, eigenvectors-as-columns)`.
pub fn sym_eigen<T: Real>(a: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    for _ in 0..MAX_SWEEPS {
        let off: T = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)] * m[(i, j)])
            .sum();
        let scale: T = (0..n).map(|i| m[(i, i)] * m[(i, i)]).sum::<T>() + off;
        if off <= T::epsilon() * T::epsilon() * scale || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = m[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (T::lit(2.0) * apq);
                let sgn = if theta >= T::zero() { T::one() } else { -T::one() };
                let t = sgn / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = (t * t + T::one()).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    (m.diagonal(), v)
}

/// Lower Cholesky factor of a symmetric positive definite matrix.
pub fn cholesky<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.nrows();
    if !a.is_square() {
        return Err(Error::InvalidInput("cholesky of a non-square matrix".into()));
    }
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d = d - l[(j, k)] * l[(j, k)];
        }
        if d <= T::zero() || !d.is_finite() {
            return Err(Error::InvalidInput("matrix is not positive definite".into()));
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s = s - l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ x = b` given the lower factor `L`.
pub fn cholesky_solve<T: Real>(l: &Matrix<T>, b: &[T]) -> Vec<T> {
    let n = l.nrows();
    let mut y = b.to_vec();
    for i in 0..n {
        let mut s = y[i];
        for k in 0..i {
            s = s - l[(i, k)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s = s - l[(k, i)] * y[k];
        }
        y[i] = s / l[(i, i)];
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn svd_reconstructs() {
        let a = Matrix::from_rows(&[vec![2.0, 0.0, 1.0], vec![1.0, 3.0, -1.0]]).unwrap();
        let d = svd(&a);
        let us = Matrix::from_fn(2, 2, |i, j| d.u[(i, j)] * d.s[j]);
        let rec = us.matmul(&d.v.transpose()).unwrap();
        assert!(rec.max_abs_diff(&a).unwrap() < 1e-13);
        assert!(d.s[0] >= d.s[1]);
    }

    #[test]
    fn null_space_of_difference_operator_is_constant() {
        let d = Matrix::from_rows(&[
            vec![-1.0f64, 1.0, 0.0],
            vec![0.0, -1.0, 1.0],
            vec![0.0, 0.0, 0.0],
        ])
        .unwrap();
        let n = null_space(&d, 1e-10);
        assert_eq!(n.ncols(), 1);
        let c = n.column(0);
        assert!((c[0] - c[1]).abs() < 1e-12 && (c[1] - c[2]).abs() < 1e-12);
        let b = null_space_rref(&d, 1e-10);
        assert_eq!(b.ncols(), 1);
        assert!(d.matvec(&b.column(0)).iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn rref_kernel_matches_svd_dimension() {
        let a = Matrix::from_rows(&[
            vec![1.0f64, 2.0, 3.0, 4.0],
            vec![2.0, 4.0, 6.0, 8.0],
            vec![0.0, 1.0, 0.0, -1.0],
        ])
        .unwrap();
        let b = null_space_rref(&a, 1e-12);
        assert_eq!(b.ncols(), null_space(&a, 1e-12).ncols());
        assert_eq!(b.ncols(), 2);
        let ab = a.matmul(&b).unwrap();
        assert!(ab.max_abs() < 1e-13);
    }

    #[test]
    fn eigen_and_cholesky() {
        let a = Matrix::from_rows(&[vec![4.0f64, 1.0], vec![1.0, 3.0]]).unwrap();
        let (w, v) = sym_eigen(&a);
        for k in 0..2 {
            let av = a.matvec(&v.column(k));
            for i in 0..2 {
                assert!((av[i] - w[k] * v[(i, k)]).abs() < 1e-12);
            }
        }
        let l = cholesky(&a).unwrap();
        let x = cholesky_solve(&l, &[1.0, 2.0]);
        let ax = a.matvec(&x);
        assert!((ax[0] - 1.0).abs() < 1e-13 && (ax[1] - 2.0).abs() < 1e-13);
        assert!(cholesky(&Matrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]).unwrap()).is_err());
    }
}
