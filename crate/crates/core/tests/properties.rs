//! Randomized invariants.

mod common;

use common::{nalgebra_pinv, penrose_error, HandPenalty};
use pblab::bounds::{la_sharp_bound, special1_bound, special2_bound, theorem_bound, Candidate};
use pblab::linalg::{
    default_projections, difference_matrix, dual_norm, fused_pinv, norm, pseudoinverse, verify_partition,
    NormExponent, PINV_RTOL,
};
use pblab::model::{
    make_elastic_net_augmented, make_fused, make_group_lasso, make_lasso, make_slope, make_sqrt_lasso, objective,
    LinkFunction,
};
use pblab::solvers::{group_soft_threshold, slope_prox, soft_threshold, solve, SolverConfig};
use pblab::tuning::{oracle_lambda, FixedPointConfig};
use pblab::{Matrix, Problem};
use proptest::collection::vec;
use proptest::prelude::*;

fn entries(len: usize) -> impl Strategy<Value = Vec<f64>> {
    vec(-3.0f64..3.0, len)
}

fn matrix(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| entries(r * c).prop_map(move |d| Matrix::from_vec(r, c, d).unwrap()))
}

/// Product of an `r × k` and a `k × c` factor: rank at most `k`.
fn low_rank(max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max, 1..=max, 1..=max).prop_flat_map(|(r, c, k)| {
        (entries(r * k), entries(k * c)).prop_map(move |(a, b)| {
            Matrix::from_vec(r, k, a).unwrap().matmul(&Matrix::from_vec(k, c, b).unwrap()).unwrap()
        })
    })
}

fn exponent() -> impl Strategy<Value = NormExponent> {
    prop_oneof![
        Just(NormExponent::ONE),
        Just(NormExponent::new(1.5).unwrap()),
        Just(NormExponent::TWO),
        Just(NormExponent::new(3.0).unwrap()),
        Just(NormExponent::INF),
    ]
}

/// A random design with noise and a sparse truth.
fn problem(n: usize, p: usize) -> impl Strategy<Value = Problem> {
    (entries(n * p), vec(-1.0f64..1.0, n), vec(-2.0f64..2.0, p)).prop_map(move |(x, eps, b)| {
        let beta: Vec<f64> = b.iter().enumerate().map(|(j, v)| if j % 3 == 0 { *v } else { 0.0 }).collect();
        Problem::from_truth(Matrix::from_vec(n, p, x).unwrap(), beta, eps).unwrap()
    })
}

fn cfg() -> SolverConfig {
    SolverConfig::default()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #[test]
    fn penrose_conditions(a in prop_oneof![matrix(12), low_rank(12)]) {
        let g = pseudoinverse(&a, PINV_RTOL).unwrap();
        prop_assert!(penrose_error(&a, &g) <= 1e-8);
    }

    #[test]
    fn holder_inequality(uv in (1usize..12).prop_flat_map(|n| (entries(n), entries(n))), q in exponent()) {
        let (u, v) = uv;
        let lhs = dot(&u, &v).abs();
        let rhs = dual_norm(&u, q) * norm(&v, q);
        prop_assert!(lhs <= rhs * (1.0 + 1e-12) + 1e-12, "{lhs} > {rhs}");
    }

    #[test]
    fn dual_norm_is_attained(u in entries(6), q in exponent()) {
        // sup over the unit ball is reached at the conjugate-exponent vector.
        let qd = q.conjugate().value();
        let d = dual_norm(&u, q);
        prop_assume!(d > 1e-6);
        let v: Vec<f64> = match q {
            NormExponent::Infinity => u.iter().map(|x| x.signum()).collect(),
            _ if q.is_one() => {
                let k = (0..u.len()).max_by(|&a, &b| u[a].abs().total_cmp(&u[b].abs())).unwrap();
                (0..u.len()).map(|j| if j == k { u[j].signum() } else { 0.0 }).collect()
            }
            _ => u.iter().map(|x| x.signum() * (x.abs() / d).powf(qd - 1.0)).collect(),
        };
        prop_assert!((norm(&v, q) - 1.0).abs() < 1e-9);
        prop_assert!((dot(&u, &v) - d).abs() <= 1e-9 * (1.0 + d));
    }

    #[test]
    fn projections_satisfy_the_partition_identity(
        masks in (2usize..7).prop_flat_map(|p| (Just(p), vec(vec(any::<bool>(), p), 1..5)))
    ) {
        let (p, mut masks) = masks;
        // Make sure every coordinate is penalized by some term.
        masks.push((0..p).map(|j| j % 2 == 0).collect());
        masks.push((0..p).map(|j| j % 2 == 1).collect());
        let ms: Vec<Matrix> = masks
            .iter()
            .filter(|m| m.iter().any(|&b| b))
            .map(|m| Matrix::from_diag(&m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect::<Vec<_>>()))
            .collect();
        let ps = default_projections(&ms).unwrap();
        let terms: Vec<(Matrix, Matrix)> = ms.into_iter().zip(ps).collect();
        prop_assert!(verify_partition(&terms, 1e-10).unwrap());
    }

    #[test]
    fn general_projections_satisfy_the_partition_identity(
        mats in (2usize..6).prop_flat_map(|p| vec(entries(p * p).prop_map(move |d| Matrix::from_vec(p, p, d).unwrap()), 1..4))
    ) {
        let ms: Vec<Matrix> = mats.into_iter().map(|m| {
            // Drop a row to make the kernels nontrivial individually.
            let keep: Vec<usize> = (1..m.nrows()).collect();
            Matrix::vstack(&[&m.select_rows(&keep), &Matrix::zeros(1, m.ncols())]).unwrap()
        }).collect();
        let ps = match default_projections(&ms) {
            Ok(ps) => ps,
            // A shared kernel is a legitimate rejection.
            Err(_) => return Ok(()),
        };
        let terms: Vec<(Matrix, Matrix)> = ms.into_iter().zip(ps).collect();
        prop_assert!(verify_partition(&terms, 1e-8).unwrap());
    }

    #[test]
    fn objective_is_nonnegative_and_convex(
        prob in problem(6, 4),
        a in entries(4),
        b in entries(4),
        t in 0.0f64..1.0,
        lambda in 0.01f64..5.0,
    ) {
        let specs = [
            make_lasso(4, lambda).unwrap(),
            make_sqrt_lasso(4, lambda).unwrap(),
            make_fused(4, lambda).unwrap(),
            make_group_lasso(4, &[vec![0, 1], vec![2, 3]], &[lambda], LinkFunction::SquareRoot).unwrap(),
            make_slope(vec![2.0, 1.5, 1.0, 0.5], lambda, LinkFunction::Identity).unwrap(),
        ];
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        for spec in &specs {
            let (fa, fb, fm) = (
                objective(spec, &prob, &a).unwrap(),
                objective(spec, &prob, &b).unwrap(),
                objective(spec, &prob, &mid).unwrap(),
            );
            prop_assert!(fa >= 0.0 && fb >= 0.0);
            prop_assert!(fm <= t * fa + (1.0 - t) * fb + 1e-9 * (1.0 + fa + fb), "{}", spec.name);
        }
    }

    #[test]
    fn elastic_net_augmentation_adds_the_ridge(prob in problem(5, 3), beta in entries(3), l2 in 0.0f64..10.0) {
        let (_, aug) = make_elastic_net_augmented(&prob, 1.0, l2).unwrap();
        let rss = |pr: &Problem| pr.residual(&beta).iter().map(|v| v * v).sum::<f64>();
        let want = rss(&prob) + l2 * beta.iter().map(|v| v * v).sum::<f64>();
        prop_assert!((rss(&aug) - want).abs() <= 1e-10 * (1.0 + want));
    }

    #[test]
    fn prox_outputs_minimize_their_objectives(v in entries(5), t in 0.0f64..3.0, d in entries(5)) {
        let dir: Vec<f64> = d.iter().map(|x| 1e-3 * x).collect();
        let mut w: Vec<f64> = vec![t + 1.0, t + 0.7, t + 0.5, t + 0.2, t + 0.1];
        w.sort_by(|a, b| b.total_cmp(a));
        let cases: [(Vec<f64>, HandPenalty, f64); 3] = [
            (soft_threshold(&v, t), HandPenalty::L1, t),
            (group_soft_threshold(&v, t), HandPenalty::Groups(5), t),
            (slope_prox(&v, &w).unwrap(), HandPenalty::Sorted(w.clone()), 1.0),
        ];
        for (x, pen, scale) in cases {
            let f = |z: &[f64]| 0.5 * z.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() + scale * pen.value(z);
            let moved: Vec<f64> = x.iter().zip(&dir).map(|(a, b)| a + b).collect();
            prop_assert!(f(&x) <= f(&moved) + 1e-12, "{pen:?}");
        }
    }

    #[test]
    fn slope_prox_with_constant_weights_is_soft_threshold(v in entries(7), t in 0.0f64..3.0) {
        let a = slope_prox(&v, &vec![t; 7]).unwrap();
        let b = soft_threshold(&v, t);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn fused_pinv_matches_numerical_pseudoinverse() {
    for p in 2..=20 {
        let d = difference_matrix::<f64>(p, 1).unwrap();
        let closed = fused_pinv::<f64>(p).unwrap();
        assert!(closed.max_abs_diff(&pseudoinverse(&d, PINV_RTOL).unwrap()).unwrap() <= 1e-10, "p = {p}");
        assert!(common::max_abs_diff(&closed, &nalgebra_pinv(&d)) <= 1e-10, "p = {p}");
    }
}

#[test]
fn link_functions_are_increasing_and_concave() {
    for link in [LinkFunction::Identity, LinkFunction::SquareRoot] {
        assert_eq!(link.value(0.0f64), 0.0);
        let grid: Vec<f64> = (0..=160).map(|k| 10f64.powf(-8.0 + k as f64 * 0.1)).collect();
        let mut prev_d = f64::INFINITY;
        let mut prev_v = 0.0;
        for &x in &grid {
            let (v, d) = (link.value(x), link.derivative(x));
            assert!(d > 0.0 && d <= prev_d, "{link:?} at {x}");
            assert!(v > prev_v, "{link:?} at {x}");
            prev_d = d;
            prev_v = v;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_beats_random_points(prob in problem(12, 6), probes in vec(entries(6), 8), lambda in 0.1f64..20.0) {
        let specs = [
            make_lasso(6, lambda).unwrap(),
            make_fused(6, lambda).unwrap(),
            make_group_lasso(6, &[vec![0, 1, 2], vec![3, 4, 5]], &[lambda], LinkFunction::Identity).unwrap(),
            make_slope(vec![3.0, 2.5, 2.0, 1.5, 1.0, 0.5], lambda, LinkFunction::Identity).unwrap(),
        ];
        for spec in &specs {
            let sol = solve(spec, &prob, &cfg()).unwrap();
            prop_assert!(sol.converged, "{}", spec.name);
            for b in &probes {
                prop_assert!(sol.objective <= objective(spec, &prob, b).unwrap() + 1e-9, "{}", spec.name);
            }
            let fitted = prob.x.matvec(&sol.beta);
            prop_assert!(fitted.iter().zip(&sol.fitted).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + a.abs())));
        }
    }

    #[test]
    fn oracle_lambda_scales_with_the_noise(prob in problem(10, 5), s in 0.1f64..10.0) {
        let spec = make_lasso(5, 1.0).unwrap();
        let t = prob.truth().unwrap();
        let scaled = Problem::from_truth(prob.x.clone(), t.beta_star.clone(), t.eps.iter().map(|e| s * e).collect()).unwrap();
        let fp = FixedPointConfig::default();
        let a = oracle_lambda(&spec, &prob, &[1.0], &cfg(), &fp).unwrap().lambda[0];
        let b = oracle_lambda(&spec, &scaled, &[1.0], &cfg(), &fp).unwrap().lambda[0];
        prop_assert!((b - s * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn bound_invariants(prob in problem(15, 6), c in 1.0f64..4.0, extra in entries(6)) {
        let fp = FixedPointConfig::default();
        let base = make_lasso(6, 1.0).unwrap();
        let tuning = oracle_lambda(&base, &prob, &[c], &cfg(), &fp).unwrap();
        let spec = base.with_lambdas(&tuning.lambda).unwrap();
        let sol = solve(&spec, &prob, &cfg()).unwrap();
        let truth = Candidate::truth(&prob).unwrap();

        // c ≥ 1 makes the estimator-dependent term nonpositive.
        for u in [0.1, 0.5, 0.9] {
            let rep = theorem_bound(&spec, &prob, &tuning, &sol, u, &truth, cfg().tol).unwrap();
            prop_assert!(rep.per_term.iter().all(|t| t.credit <= 0.0));
            prop_assert!(rep.holds, "u = {u}: lhs {} rhs {}", rep.lhs, rep.rhs);
        }
        if c > 1.0 + 1e-9 {
            let rep = la_sharp_bound(&spec, &prob, &tuning, &sol, &[], cfg().tol).unwrap();
            let want = 1.0 + 2.0 / (c - 1.0);
            prop_assert!((rep.factor - want).abs() <= 1e-12 * want);
            prop_assert!(rep.holds);
        }

        let unit = oracle_lambda(&base, &prob, &[1.0], &cfg(), &fp).unwrap();
        let spec1 = base.with_lambdas(&unit.lambda).unwrap();
        let sol1 = solve(&spec1, &prob, &cfg()).unwrap();
        // More candidates can only lower the minimum.
        let few = special1_bound(&spec1, &prob, &unit, &sol1, &[], cfg().tol).unwrap();
        let more = special1_bound(&spec1, &prob, &unit, &sol1, &[Candidate::new("extra", extra.clone())], cfg().tol).unwrap();
        prop_assert!(more.rhs <= few.rhs);
        prop_assert!(few.holds && more.holds);
        prop_assert!(special2_bound(&spec1, &prob, &unit, &sol1, cfg().tol).unwrap().holds);
    }
}

fn non_increasing(trace: &[f64]) -> bool {
    trace.windows(2).all(|w| w[1] <= w[0] + 1e-12 * (1.0 + w[0].abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn reported_objective_never_increases(prob in problem(10, 8), lambda in 0.5f64..10.0, seed in 0u64..4) {
        let specs = [
            make_lasso(8, lambda).unwrap(),
            make_sqrt_lasso(8, lambda / 10.0).unwrap(),
            make_fused(8, lambda).unwrap(),
            make_group_lasso(8, &[vec![0, 1, 2, 3], vec![4, 5, 6, 7]], &[lambda / 10.0], LinkFunction::SquareRoot).unwrap(),
            make_slope((0..8).map(|j| 2.0 - 0.2 * j as f64).collect(), lambda, LinkFunction::Identity).unwrap(),
        ];
        for spec in &specs {
            let sol = match solve(spec, &prob, &cfg().with_seed(seed)) {
                Ok(s) => s,
                Err(pblab::Error::Degenerate(_)) => continue,
                Err(e) => return Err(TestCaseError::fail(format!("{}: {e}", spec.name))),
            };
            prop_assert!(non_increasing(&sol.objective_trace), "{}: {:?}", spec.name, sol.objective_trace);
        }
    }
}

/// Largest change of `‖Y − Xβ̂λ‖²` between consecutive points of a geometric
/// λ-grid from `hi` down to `lo`.
fn max_rss_jump(prob: &Problem, hi: f64, lo: f64, ratio: f64) -> f64 {
    let mut lambda = hi;
    let mut prev: Option<f64> = None;
    let mut jump: f64 = 0.0;
    while lambda >= lo {
        let sol = solve(&make_lasso(prob.p(), lambda).unwrap(), prob, &cfg()).unwrap();
        let rss: f64 = prob.residual(&sol.beta).iter().map(|v| v * v).sum();
        if let Some(p) = prev {
            jump = jump.max((rss - p).abs());
        }
        prev = Some(rss);
        lambda /= ratio;
    }
    jump
}

#[test]
fn residual_is_continuous_in_lambda() {
    let mut r = common::rng(99);
    for _ in 0..3 {
        let (n, p) = (20, 30);
        let x = Matrix::from_rows(&common::gaussian_rows(&mut r, n, p)).unwrap();
        let eps = common::gaussian_vec(&mut r, n);
        let beta: Vec<f64> = (0..p).map(|j| if j < 4 { 1.0 } else { 0.0 }).collect();
        let prob = Problem::from_truth(x, beta, eps).unwrap();
        let top = pblab::tuning::lambda_max(&make_lasso(p, 1.0).unwrap(), &prob).unwrap()[0];
        let fine = max_rss_jump(&prob, top, top / 50.0, 1.01);
        let coarse = max_rss_jump(&prob, top, top / 50.0, 1.2);
        assert!(fine <= coarse, "fine {fine} coarse {coarse}");
    }
}
