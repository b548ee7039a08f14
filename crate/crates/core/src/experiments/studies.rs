//! Scaling studies: the lasso rate and the noise-level invariance of the square-root lasso tuning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::experiments::campaign::{draw_problem, median, run_monte_carlo, DesignKind, ExperimentConfig, TruthKind};
use crate::experiments::catalog::EstimatorKind;
use crate::experiments::data::NoiseKind;
use crate::model::{make_lasso, make_sqrt_lasso};
use crate::solvers::SolverConfig;
use crate::tuning::{oracle_lambda, FixedPointConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RateStudyConfig {
    pub ns: Vec<usize>,
    /// `p = p_factor · n`.
    pub p_factor: usize,
    pub rho: f64,
    pub sigma: f64,
    pub s: usize,
    pub amplitude: f64,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverConfig,
}

impl Default for RateStudyConfig {
    fn default() -> Self {
        RateStudyConfig {
            ns: vec![50, 100, 200, 400],
            p_factor: 2,
            rho: 0.0,
            sigma: 1.0,
            s: 5,
            amplitude: 1.0,
            trials: 100,
            seed: 0,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub n: usize,
    pub p: usize,
    pub trials: usize,
    pub failures: usize,
    /// Median of `λ̄ / (σ √(n log p))`.
    pub median_lambda_ratio: f64,
    /// Median of `lhs / (σ √(log p / n) ‖β*‖₁)`.
    pub median_lhs_ratio: f64,
    /// Largest `lhs / rhs_special2`.
    pub max_lhs_over_special2: f64,
    /// Every completed trial satisfies the `u → 0` bound (within the slack allowance).
    pub special2_holds: bool,
}

/// Oracle-tuned lasso over a grid of sample sizes with `p = p_factor · n`.
pub fn rate_study_lasso(cfg: &RateStudyConfig) -> Result<Vec<RateRow>> {
    let l1 = cfg.s as f64 * cfg.amplitude.abs();
    cfg.ns
        .iter()
        .map(|&n| {
            let p = cfg.p_factor * n;
            let mut exp = ExperimentConfig::new(EstimatorKind::Lasso, n, p);
            exp.design = DesignKind::Equicorrelated { rho: cfg.rho };
            exp.noise = NoiseKind::Gaussian { sigma: cfg.sigma };
            exp.beta_star = TruthKind::Sparse { s: cfg.s, amplitude: cfg.amplitude };
            exp.trials = cfg.trials;
            exp.seed = cfg.seed.wrapping_add(n as u64);
            exp.solver = cfg.solver.clone();
            let camp = run_monte_carlo(&exp)?;
            let logp = (p as f64).ln();
            let ok: Vec<_> = camp.records.iter().filter(|r| r.failure.is_none()).collect();
            let lambda_scale = cfg.sigma * (n as f64 * logp).sqrt();
            let lhs_scale = cfg.sigma * (logp / n as f64).sqrt() * l1;
            Ok(RateRow {
                n,
                p,
                trials: camp.summary.trials,
                failures: camp.summary.failures,
                median_lambda_ratio: median(ok.iter().map(|r| r.lambda[0] / lambda_scale)),
                median_lhs_ratio: median(ok.iter().map(|r| r.lhs / lhs_scale)),
                max_lhs_over_special2: ok
                    .iter()
                    .filter_map(|r| r.rhs_special2.map(|rhs| r.lhs / rhs))
                    .fold(f64::NEG_INFINITY, f64::max),
                special2_holds: ok.iter().all(|r| r.holds_special2 == Some(true)),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SigmaStudyConfig {
    pub n: usize,
    pub p: usize,
    pub sigmas: Vec<f64>,
    pub rho: f64,
    pub s: usize,
    /// Entry size of `β*`; `‖β*‖₁ = s · amplitude`.
    pub amplitude: f64,
    pub trials: usize,
    pub seed: u64,
    pub solver: SolverConfig,
    pub fixed_point: FixedPointConfig,
}

impl Default for SigmaStudyConfig {
    fn default() -> Self {
        SigmaStudyConfig {
            n: 200,
            p: 100,
            sigmas: vec![0.5, 1.0, 2.0],
            rho: 0.0,
            s: 5,
            amplitude: 0.2,
            trials: 100,
            seed: 0,
            solver: SolverConfig::default(),
            fixed_point: FixedPointConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaRow {
    pub sigma: f64,
    pub trials: usize,
    pub failures: usize,
    /// Median square-root-lasso oracle `λ̄`.
    pub median_lambda: f64,
    /// Median of `λ̄ / √(log p)`.
    pub median_lambda_over_sqrt_log_p: f64,
    /// Median lasso oracle `λ̄` on the same draws.
    pub lasso_median_lambda: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmaStudy {
    pub rows: Vec<SigmaRow>,
    /// `max / min` of the square-root-lasso medians across noise levels.
    pub median_ratio: f64,
    /// Largest per-trial `|λ_lasso(σ) − (σ/σ₀) λ_lasso(σ₀)| / λ_lasso(σ)`, with
    /// `σ₀` the first noise level. Each noise level reuses the same standard draws.
    pub lasso_linearity_error: f64,
}

/// Square-root-lasso oracle tuning across noise levels, with the lasso as a
/// control. Every noise level uses the same seed, so the noise vectors differ
/// only by their scale.
pub fn sigma_invariance_study_sqrt_lasso(cfg: &SigmaStudyConfig) -> Result<SigmaStudy> {
    let logp = (cfg.p as f64).ln();
    let sqrt_spec = make_sqrt_lasso(cfg.p, 1.0)?;
    let lasso_spec = make_lasso(cfg.p, 1.0)?;
    let mut rows = Vec::new();
    let mut lasso_by_sigma: Vec<Vec<f64>> = Vec::new();
    for &sigma in &cfg.sigmas {
        let mut exp = ExperimentConfig::new(EstimatorKind::SqrtLasso, cfg.n, cfg.p);
        exp.design = DesignKind::Equicorrelated { rho: cfg.rho };
        exp.noise = NoiseKind::Gaussian { sigma };
        exp.beta_star = TruthKind::Sparse { s: cfg.s, amplitude: cfg.amplitude };
        exp.trials = cfg.trials;
        exp.seed = cfg.seed;
        exp.validate()?;
        let per_trial: Vec<(Option<f64>, f64)> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<(Option<f64>, f64)> {
                let prob = draw_problem(&exp, t)?;
                let lasso = oracle_lambda(&lasso_spec, &prob, &[1.0], &cfg.solver, &cfg.fixed_point)?.lambda[0];
                let sqrt = oracle_lambda(&sqrt_spec, &prob, &[1.0], &cfg.solver, &cfg.fixed_point).ok().map(|t| t.lambda[0]);
                Ok((sqrt, lasso))
            })
            .collect::<Result<_>>()?;
        let sqrt: Vec<f64> = per_trial.iter().filter_map(|(s, _)| *s).collect();
        let lasso: Vec<f64> = per_trial.iter().map(|(_, l)| *l).collect();
        let m = median(sqrt.iter().copied());
        rows.push(SigmaRow {
            sigma,
            trials: cfg.trials,
            failures: cfg.trials - sqrt.len(),
            median_lambda: m,
            median_lambda_over_sqrt_log_p: median(sqrt.iter().map(|l| l / logp.sqrt())),
            lasso_median_lambda: median(lasso.iter().copied()),
        });
        lasso_by_sigma.push(lasso);
    }
    let medians = rows.iter().map(|r| r.median_lambda);
    let (lo, hi) = medians.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m), hi.max(m)));
    let mut lin = 0.0f64;
    if let (Some(&s0), Some(base)) = (cfg.sigmas.first(), lasso_by_sigma.first()) {
        for (&sigma, lams) in cfg.sigmas.iter().zip(&lasso_by_sigma) {
            for (l, b) in lams.iter().zip(base) {
                lin = lin.max((l - sigma / s0 * b).abs() / l);
            }
        }
    }
    Ok(SigmaStudy { rows, median_ratio: hi / lo, lasso_linearity_error: lin })
}
