//! Slice-level vector helpers.

use crate::real::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub fn norm2_sq<T: Real>(a: &[T]) -> T {
    a.iter().map(|&x| x * x).sum()
}

/// Euclidean norm, scaled to avoid overflow.
pub fn norm2<T: Real>(a: &[T]) -> T {
    let m = max_abs(a);
    if m == T::zero() || !m.is_finite() {
        return m;
    }
    m * a.iter().map(|&x| (x / m) * (x / m)).sum::<T>().sqrt()
}

pub fn max_abs<T: Real>(a: &[T]) -> T {
    a.iter().fold(T::zero(), |m, &x| m.max(x.abs()))
}

pub fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

pub fn add<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x + y).collect()
}

pub fn scale<T: Real>(a: &[T], s: T) -> Vec<T> {
    a.iter().map(|&x| x * s).collect()
}

/// `y ← y + a x`
pub fn axpy<T: Real>(a: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi = *yi + a * xi;
    }
}

pub fn is_finite<T: Real>(a: &[T]) -> bool {
    a.iter().all(|x| x.is_finite())
}

pub fn cast<T: Real, U: Real>(a: &[T]) -> Vec<U> {
    a.iter()
        .map(|x| U::from_f64(x.to_f64_lossy()).unwrap_or_else(U::nan))
        .collect()
}
