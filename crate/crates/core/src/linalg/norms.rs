use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::vector::{max_abs, norm2};
use crate::real::Real;

/// Exponent `q ∈ [1, ∞]` of an ℓ_q norm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NormExponent {
    Finite(f64),
    Infinity,
}

impl NormExponent {
    pub const ONE: NormExponent = NormExponent::Finite(1.0);
    pub const TWO: NormExponent = NormExponent::Finite(2.0);
    pub const INF: NormExponent = NormExponent::Infinity;

    /// Accepts any `q ≥ 1`; `f64::INFINITY` maps to [`NormExponent::Infinity`].
    pub fn new(q: f64) -> Result<Self> {
        if q.is_nan() || q < 1.0 {
            return Err(Error::InvalidInput(format!("norm exponent must be >= 1, got {q}")));
        }
        Ok(if q.is_infinite() {
            NormExponent::Infinity
        } else {
            NormExponent::Finite(q)
        })
    }

    pub fn value(self) -> f64 {
        match self {
            NormExponent::Finite(q) => q,
            NormExponent::Infinity => f64::INFINITY,
        }
    }

    pub fn is_one(self) -> bool {
        self == NormExponent::ONE
    }

    pub fn is_two(self) -> bool {
        self == NormExponent::TWO
    }

    /// The conjugate exponent `p` with `1/p + 1/q = 1`.
    pub fn conjugate(self) -> Self {
        match self {
            NormExponent::Infinity => NormExponent::ONE,
            NormExponent::Finite(q) if q == 1.0 => NormExponent::Infinity,
            NormExponent::Finite(q) => NormExponent::Finite(q / (q - 1.0)),
        }
    }

    pub fn norm<T: Real>(self, v: &[T]) -> T {
        match self {
            NormExponent::Infinity => max_abs(v),
            NormExponent::Finite(q) if q == 1.0 => v.iter().map(|x| x.abs()).sum(),
            NormExponent::Finite(q) if q == 2.0 => norm2(v),
            NormExponent::Finite(q) => {
                let m = max_abs(v);
                if m == T::zero() {
                    return m;
                }
                let q = T::lit(q);
                m * v.iter().map(|&x| (x.abs() / m).powf(q)).sum::<T>().powf(q.recip())
            }
        }
    }

    /// `‖v‖_q* = ‖v‖_p`.
    pub fn dual_norm<T: Real>(self, v: &[T]) -> T {
        self.conjugate().norm(v)
    }
}

impl std::fmt::Display for NormExponent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NormExponent::Finite(q) => write!(f, "{q}"),
            NormExponent::Infinity => f.write_str("inf"),
        }
    }
}

/// ℓ_q norm of `v`.
pub fn norm<T: Real>(v: &[T], q: NormExponent) -> T {
    q.norm(v)
}

/// Dual norm of the ℓ_q norm evaluated at `v`.
pub fn dual_norm<T: Real>(v: &[T], q: NormExponent) -> T {
    q.dual_norm(v)
}

/// Sorted-ℓ1 norm `Σ_i ω_i |v|_(i)` with `|v|_(1) ≥ |v|_(2) ≥ …`; `weights` must be non-increasing.
pub fn sorted_l1_norm<T: Real>(v: &[T], weights: &[T]) -> T {
    let mut a: Vec<T> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.partial_cmp(x).expect("finite entries"));
    a.iter().zip(weights).map(|(&x, &w)| x * w).sum()
}

/// Dual of the sorted-ℓ1 norm: `max_k Σ_{i≤k} |v|_(i) / Σ_{i≤k} ω_i`.
pub fn sorted_l1_dual<T: Real>(v: &[T], weights: &[T]) -> T {
    let mut a: Vec<T> = v.iter().map(|x| x.abs()).collect();
    a.sort_by(|x, y| y.partial_cmp(x).expect("finite entries"));
    let (mut num, mut den, mut best) = (T::zero(), T::zero(), T::zero());
    for (&x, &w) in a.iter().zip(weights) {
        num = num + x;
        den = den + w;
        best = best.max(num / den);
    }
    best
}
