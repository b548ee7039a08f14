//! Proximal operators and projections onto dual-norm balls.

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::vector;
use crate::real::Real;

/// Componentwise `sign(v_i) · max(|v_i| − t, 0)`.
pub fn soft_threshold<T: Real>(v: &[T], t: T) -> Vec<T> {
    v.iter().map(|&x| soft(x, t)).collect()
}

#[inline]
pub(crate) fn soft<T: Real>(x: T, t: T) -> T {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        T::zero()
    }
}

/// Prox of `t‖·‖₂`: scales `v` by `max(1 − t/‖v‖₂, 0)`.
pub fn group_soft_threshold<T: Real>(v: &[T], t: T) -> Vec<T> {
    let nv = vector::norm2(v);
    if nv <= t {
        return vec![T::zero(); v.len()];
    }
    vector::scale(v, T::one() - t / nv)
}

/// Non-increasing isotonic regression (pool adjacent violators).
pub fn isotonic_nonincreasing<T: Real>(z: &[T]) -> Vec<T> {
    // Each block: (sum, count); merged while a later block's mean exceeds its predecessor's.
    let mut sums: Vec<T> = Vec::with_capacity(z.len());
    let mut counts: Vec<usize> = Vec::with_capacity(z.len());
    for &x in z {
        sums.push(x);
        counts.push(1);
        while sums.len() > 1 {
            let k = sums.len() - 1;
            let later = sums[k] / T::from_count(counts[k]);
            let earlier = sums[k - 1] / T::from_count(counts[k - 1]);
            if later < earlier {
                break;
            }
            sums[k - 1] = sums[k - 1] + sums[k];
            counts[k - 1] += counts[k];
            sums.pop();
            counts.pop();
        }
    }
    let mut out = Vec::with_capacity(z.len());
    for (s, c) in sums.into_iter().zip(counts) {
        let mean = s / T::from_count(c);
        out.extend(std::iter::repeat(mean).take(c));
    }
    out
}

fn check_weights<T: Real>(v: &[T], weights: &[T]) -> Result<()> {
    if v.len() != weights.len() {
        return Err(dim_mismatch("sorted-l1 weights", v.len(), weights.len()));
    }
    if weights.iter().any(|w| !(*w >= T::zero())) || weights.windows(2).any(|p| p[1] > p[0]) {
        return Err(Error::InvalidInput("sorted-l1 weights must be nonnegative and non-increasing".into()));
    }
    Ok(())
}

/// Indices sorting `|v|` decreasingly (stable).
pub(crate) fn order_by_magnitude<T: Real>(v: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].abs().partial_cmp(&v[a].abs()).expect("finite entries"));
    idx
}

/// Prox of the sorted-ℓ1 norm: `argmin_x ½‖x − v‖² + Σ_i ω_i |x|_(i)`.
pub fn slope_prox<T: Real>(v: &[T], weights: &[T]) -> Result<Vec<T>> {
    check_weights(v, weights)?;
    Ok(slope_prox_unchecked(v, weights))
}

pub(crate) fn slope_prox_unchecked<T: Real>(v: &[T], weights: &[T]) -> Vec<T> {
    let idx = order_by_magnitude(v);
    let z: Vec<T> = idx.iter().zip(weights).map(|(&i, &w)| v[i].abs() - w).collect();
    let iso = isotonic_nonincreasing(&z);
    let mut out = vec![T::zero(); v.len()];
    for (k, &i) in idx.iter().enumerate() {
        let mag = iso[k].max(T::zero());
        out[i] = if v[i] < T::zero() { -mag } else { mag };
    }
    out
}

/// Euclidean projection onto `{x : ‖x‖_∞ ≤ r}`.
pub fn project_linf_ball<T: Real>(v: &[T], r: T) -> Vec<T> {
    v.iter().map(|&x| x.max(-r).min(r)).collect()
}

/// Euclidean projection onto `{x : ‖x‖₂ ≤ r}`.
pub fn project_l2_ball<T: Real>(v: &[T], r: T) -> Vec<T> {
    let nv = vector::norm2(v);
    if nv <= r {
        v.to_vec()
    } else {
        vector::scale(v, r / nv)
    }
}

/// Projection of a nonnegative vector onto the simplex `{x ≥ 0 : Σx = r}`.
fn project_simplex<T: Real>(v: &[T], r: T) -> Vec<T> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite entries"));
    let mut cum = T::zero();
    let mut theta = T::zero();
    for (k, &x) in u.iter().enumerate() {
        cum = cum + x;
        let t = (cum - r) / T::from_count(k + 1);
        if x - t > T::zero() {
            theta = t;
        }
    }
    v.iter().map(|&x| (x - theta).max(T::zero())).collect()
}

/// Euclidean projection onto `{x : ‖x‖₁ ≤ r}`.
pub fn project_l1_ball<T: Real>(v: &[T], r: T) -> Vec<T> {
    if v.iter().map(|x| x.abs()).sum::<T>() <= r {
        return v.to_vec();
    }
    let mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    let w = project_simplex(&mags, r);
    v.iter().zip(w).map(|(&x, m)| if x < T::zero() { -m } else { m }).collect()
}

/// Projection onto `{x : supp(x) ⊆ support, sign(x_i) = signs_i, ‖x‖₁ = 1}`.
pub(crate) fn project_signed_face<T: Real>(v: &[T], support: &[usize], signs: &[T]) -> Vec<T> {
    let vals: Vec<T> = support.iter().zip(signs).map(|(&i, &s)| v[i] * s).collect();
    let w = project_simplex(&vals, T::one());
    let mut out = vec![T::zero(); v.len()];
    for ((&i, &s), m) in support.iter().zip(signs).zip(w) {
        out[i] = s * m;
    }
    out
}

/// Euclidean projection onto `{x : ‖x‖_p ≤ 1}` for `1 < p < ∞`.
pub fn project_lp_ball<T: Real>(v: &[T], p: f64) -> Vec<T> {
    let pt = T::lit(p);
    let norm = v.iter().map(|x| x.abs().powf(pt)).sum::<T>().powf(pt.recip());
    if norm <= T::one() {
        return v.to_vec();
    }
    // x_i solves y + μ p y^{p−1} = |v_i|; μ is chosen so that ‖x‖_p = 1.
    let solve_y = |a: T, mu: T| -> T {
        let (mut lo, mut hi) = (T::zero(), a);
        for _ in 0..200 {
            let mid = (lo + hi) * T::lit(0.5);
            if mid + mu * pt * mid.powf(pt - T::one()) > a {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= T::epsilon() * a {
                break;
            }
        }
        (lo + hi) * T::lit(0.5)
    };
    let mags: Vec<T> = v.iter().map(|x| x.abs()).collect();
    let pnorm = |mu: T| mags.iter().map(|&a| solve_y(a, mu).powf(pt)).sum::<T>();
    let (mut lo, mut hi) = (T::zero(), T::one());
    while pnorm(hi) > T::one() {
        hi = hi * T::lit(2.0);
    }
    for _ in 0..200 {
        let mid = (lo + hi) * T::lit(0.5);
        if pnorm(mid) > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= T::epsilon() * hi {
            break;
        }
    }
    v.iter()
        .zip(&mags)
        .map(|(&x, &a)| {
            let y = solve_y(a, hi);
            if x < T::zero() {
                -y
            } else {
                y
            }
        })
        .collect()
}

/// Projection onto the unit ball of the dual sorted-ℓ1 norm, via Moreau's identity.
pub fn project_sorted_l1_dual_ball<T: Real>(v: &[T], weights: &[T]) -> Vec<T> {
    vector::sub(v, &slope_prox_unchecked(v, weights))
}

/// Projection onto the permutahedron `conv{permutations of w}` (`w` non-increasing).
pub fn project_permutahedron<T: Real>(v: &[T], weights: &[T]) -> Vec<T> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).expect("finite entries"));
    let z: Vec<T> = idx.iter().zip(weights).map(|(&i, &w)| v[i] - w).collect();
    let iso = isotonic_nonincreasing(&z);
    let mut out = vec![T::zero(); v.len()];
    for (k, &i) in idx.iter().enumerate() {
        out[i] = v[i] - iso[k];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&[3.0, -1.0, 0.5], 1.0), vec![2.0, 0.0, 0.0]);
        assert_eq!(soft_threshold(&[3.0, -1.0, 0.5], 0.0), vec![3.0, -1.0, 0.5]);
    }

    #[test]
    fn group_threshold_at_boundary() {
        assert_eq!(group_soft_threshold(&[3.0, 4.0], 5.0), vec![0.0, 0.0]);
        assert_eq!(group_soft_threshold(&[3.0, 4.0], 2.5), vec![1.5, 2.0]);
    }

    #[test]
    fn slope_prox_with_equal_weights_is_soft_threshold() {
        let v = [2.5, -0.3, 1.0, -4.0];
        assert_eq!(slope_prox(&v, &[1.0; 4]).unwrap(), soft_threshold(&v, 1.0));
        assert!(slope_prox(&v, &[1.0, 2.0, 0.5, 0.1]).is_err());
    }

    #[test]
    fn isotonic_pools_violators() {
        assert_eq!(isotonic_nonincreasing(&[1.0, 3.0, 2.0]), vec![2.0, 2.0, 2.0]);
        assert_eq!(isotonic_nonincreasing(&[3.0, 1.0, 2.0]), vec![3.0, 1.5, 1.5]);
    }

    #[test]
    fn ball_projections() {
        assert_eq!(project_linf_ball(&[2.0, -0.5], 1.0), vec![1.0, -0.5]);
        let b = project_l2_ball(&[3.0f64, 4.0], 1.0);
        assert!((b[0] - 0.6).abs() < 1e-15 && (b[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_l1_ball(&[2.0, -1.0], 1.0), vec![1.0, 0.0]);
        let x = project_lp_ball(&[3.0f64, 4.0], 2.0);
        assert!((x[0] - 0.6).abs() < 1e-12 && (x[1] - 0.8).abs() < 1e-12);
        // Permutahedron of (2, 1): the segment between (2, 1) and (1, 2).
        let y = project_permutahedron(&[3.0f64, 3.0], &[2.0, 1.0]);
        assert!((y[0] - 1.5).abs() < 1e-15 && (y[1] - 1.5).abs() < 1e-15);
    }
}
