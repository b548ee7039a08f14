//! Monte Carlo certification campaigns.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{check_bound, BoundMode, BoundReport, Candidate};
use crate::error::{dim_mismatch, Error, Result};
use crate::experiments::catalog::EstimatorKind;
use crate::experiments::data::{design_from_stream, noise_from_rng, normalize_columns, purpose, stream, NoiseKind};
use crate::linalg::Matrix;
use crate::model::{EstimatorSpec, Problem};
use crate::solvers::{solve, Solution, SolverConfig};
use crate::tuning::{oracle_lambda, oracle_solution, FixedPointConfig, OracleTuning};

/// Largest tolerated fraction of failed trials.
pub const MAX_FAILURE_RATE: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignKind {
    /// Fresh equicorrelated Gaussian design in every trial.
    Equicorrelated { rho: f64 },
    /// `X = I` (requires `n = p`); not column-normalized.
    Identity,
    /// Fixed design read from a JSON file holding nested rows.
    CustomFile { path: PathBuf },
    /// Fixed design given inline as nested rows.
    Custom { rows: Vec<Vec<f64>> },
}

impl Default for DesignKind {
    fn default() -> Self {
        DesignKind::Equicorrelated { rho: 0.0 }
    }
}

impl DesignKind {
    pub fn rho(&self) -> Option<f64> {
        match *self {
            DesignKind::Equicorrelated { rho } => Some(rho),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TruthKind {
    Sparse { s: usize, amplitude: f64 },
    Custom { values: Vec<f64> },
}

impl Default for TruthKind {
    fn default() -> Self {
        TruthKind::Sparse { s: 5, amplitude: 1.0 }
    }
}

fn default_trials() -> usize {
    100
}

fn default_noise() -> NoiseKind {
    NoiseKind::Gaussian { sigma: 1.0 }
}

/// One campaign: an estimator, a data generator and a number of trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub estimator: EstimatorKind,
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub design: DesignKind,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    #[serde(default)]
    pub beta_star: TruthKind,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Tuning constants: empty means all ones, one value is broadcast.
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

impl ExperimentConfig {
    pub fn new(estimator: EstimatorKind, n: usize, p: usize) -> Self {
        ExperimentConfig {
            estimator,
            n,
            p,
            design: DesignKind::default(),
            noise: default_noise(),
            beta_star: TruthKind::default(),
            trials: default_trials(),
            c: Vec::new(),
            seed: 0,
            solver: SolverConfig::default(),
            fixed_point: FixedPointConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidInput(format!("n must be at least 2, got {}", self.n)));
        }
        if self.p < 1 {
            return Err(Error::InvalidInput("p must be at least 1".into()));
        }
        if self.trials < 1 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        self.estimator.validate()?;
        self.noise.validate()?;
        self.solver.validate()?;
        self.fixed_point.validate()?;
        match &self.design {
            DesignKind::Equicorrelated { rho } if !(0.0..1.0).contains(rho) => {
                return Err(Error::InvalidInput(format!("design.rho must lie in [0, 1), got {rho}")))
            }
            DesignKind::Identity if self.n != self.p => {
                return Err(Error::InvalidInput(format!("identity design needs n = p, got n={} p={}", self.n, self.p)))
            }
            DesignKind::Custom { rows } => {
                if rows.len() != self.n {
                    return Err(dim_mismatch("custom design rows", self.n, rows.len()));
                }
                if let Some(r) = rows.iter().find(|r| r.len() != self.p) {
                    return Err(dim_mismatch("custom design columns", self.p, r.len()));
                }
            }
            _ => {}
        }
        if self.estimator.needs_identity_design() && self.design != DesignKind::Identity {
            return Err(Error::InvalidInput(format!("{} requires design kind 'identity'", self.estimator.label())));
        }
        match &self.beta_star {
            TruthKind::Sparse { s, amplitude } => {
                if *s > self.p {
                    return Err(Error::InvalidInput(format!("beta_star.s = {s} exceeds p = {}", self.p)));
                }
                if !amplitude.is_finite() {
                    return Err(Error::InvalidInput("beta_star.amplitude must be finite".into()));
                }
            }
            TruthKind::Custom { values } if values.len() != self.p => {
                return Err(dim_mismatch("beta_star.values", self.p, values.len()))
            }
            _ => {}
        }
        if let Some(c) = self.c.iter().find(|c| !(**c > 0.0) || !c.is_finite()) {
            return Err(Error::InvalidInput(format!("c must be positive, got {c}")));
        }
        Ok(())
    }

    /// Replaces a `custom_file` design by its contents. Relative paths are
    /// taken relative to `base`.
    pub fn resolve_files(&mut self, base: &Path) -> Result<()> {
        if let DesignKind::CustomFile { path } = &self.design {
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            let text = std::fs::read_to_string(&full)
                .map_err(|e| Error::InvalidInput(format!("cannot read design file {}: {e}", full.display())))?;
            let rows = parse_rows(&text)
                .map_err(|e| Error::InvalidInput(format!("design file {}: {e}", full.display())))?;
            self.design = DesignKind::Custom { rows };
        }
        Ok(())
    }

    /// Tuning constants expanded to one per penalty term.
    pub fn constants(&self, k: usize) -> Result<Vec<f64>> {
        match self.c.len() {
            0 => Ok(vec![1.0; k]),
            1 => Ok(vec![self.c[0]; k]),
            len if len == k => Ok(self.c.clone()),
            len => Err(dim_mismatch("c (one per penalty term)", k, len)),
        }
    }

    fn truth(&self) -> Vec<f64> {
        match &self.beta_star {
            TruthKind::Sparse { s, amplitude } => (0..self.p).map(|j| if j < *s { *amplitude } else { 0.0 }).collect(),
            TruthKind::Custom { values } => values.clone(),
        }
    }
}

/// Accepts either `[[...], ...]` or `{"rows": [[...], ...]}`.
fn parse_rows(text: &str) -> std::result::Result<Vec<Vec<f64>>, String> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Rows {
        Bare(Vec<Vec<f64>>),
        Wrapped { rows: Vec<Vec<f64>> },
    }
    match serde_json::from_str::<Rows>(text).map_err(|e| e.to_string())? {
        Rows::Bare(r) | Rows::Wrapped { rows: r } => Ok(r),
    }
}

/// Design, noise and response of one trial.
pub fn draw_problem(cfg: &ExperimentConfig, trial: usize) -> Result<Problem<f64>> {
    cfg.validate()?;
    let t = trial as u64;
    let x = match &cfg.design {
        DesignKind::Equicorrelated { rho } => design_from_stream(cfg.n, cfg.p, *rho, cfg.seed, t)?,
        DesignKind::Identity => Matrix::identity(cfg.n),
        DesignKind::Custom { rows } => {
            let mut x = Matrix::from_rows(rows)?;
            if !normalize_columns(&mut x) {
                return Err(Error::InvalidInput("custom design has an all-zero column".into()));
            }
            x
        }
        DesignKind::CustomFile { path } => {
            return Err(Error::InvalidInput(format!("design file {} has not been loaded", path.display())))
        }
    };
    let eps = noise_from_rng(cfg.noise, cfg.n, &mut stream(cfg.seed, t, purpose::NOISE))?;
    Ok(Problem::from_truth(x, cfg.truth(), eps)?.with_seed(cfg.seed))
}

/// Outcome of one trial. Failed trials carry `failure` and NaN numbers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub estimator: String,
    pub n: usize,
    pub p: usize,
    pub rho: Option<f64>,
    pub noise: String,
    pub sigma: f64,
    pub lambda: Vec<f64>,
    /// Elastic-net ridge parameter.
    pub lambda2: Option<f64>,
    pub lhs: f64,
    /// `None` when some `c_j ≠ 1`.
    pub rhs_special1: Option<f64>,
    pub rhs_special2: Option<f64>,
    pub rhs_theorem_u05: f64,
    pub holds_special1: Option<bool>,
    pub holds_special2: Option<bool>,
    pub holds_theorem_u05: bool,
    /// Converged solve at the oracle tuning.
    pub certified: bool,
    pub allowance: f64,
    pub kkt_residual: f64,
    pub fp_residual: f64,
    pub solver_iterations: usize,
    pub fp_iterations: usize,
    pub solve_ms: f64,
    pub failure: Option<String>,
}

impl TrialRecord {
    /// All computed bounds hold (vacuously true for failures).
    pub fn holds(&self) -> bool {
        self.failure.is_none()
            && self.holds_theorem_u05
            && self.holds_special1.unwrap_or(true)
            && self.holds_special2.unwrap_or(true)
    }

    /// A certified trial with a violated bound.
    pub fn is_violation(&self) -> bool {
        self.failure.is_none() && self.certified && !self.holds()
    }
}

/// Everything a trial computes, for callers that need more than the record.
#[derive(Clone, Debug)]
pub struct TrialDetail {
    pub spec: EstimatorSpec<f64>,
    pub problem: Problem<f64>,
    pub tuning: OracleTuning<f64>,
    pub solution: Solution<f64>,
    pub special1: Option<BoundReport<f64>>,
    pub special2: Option<BoundReport<f64>>,
    pub theorem: BoundReport<f64>,
    pub lambda2: Option<f64>,
}

/// Runs one trial: draw data, tune, solve, evaluate the bounds.
pub fn run_trial(cfg: &ExperimentConfig, template: &EstimatorSpec<f64>, trial: usize) -> Result<TrialDetail> {
    let base = draw_problem(cfg, trial)?;
    let (problem, lambda2) = cfg.estimator.prepare(&base)?;
    let c = cfg.constants(template.penalty.len())?;
    let (tuning, spec, solution) = if cfg.estimator.oracle_tuned() {
        let (tuning, solution) = oracle_solution(template, &problem, &c, &cfg.solver, &cfg.fixed_point)?;
        let spec = template.with_lambdas(&tuning.lambda)?;
        (tuning, spec, solution)
    } else {
        // The template's λ is used as is; the reports flag the mismatch.
        let tuning = oracle_lambda(template, &problem, &c, &cfg.solver, &cfg.fixed_point)?;
        let solution = solve(template, &problem, &cfg.solver)?;
        (tuning, template.clone(), solution)
    };
    let tol = cfg.solver.tol;
    let unit_c = c.iter().all(|&v| v == 1.0);
    let candidates = vec![Candidate::new("beta_hat", solution.beta.clone())];
    let special1 = if unit_c {
        Some(check_bound(&spec, &problem, &tuning, &solution, &BoundMode::Special1 { candidates }, tol)?)
    } else {
        None
    };
    let special2 = if unit_c {
        Some(check_bound(&spec, &problem, &tuning, &solution, &BoundMode::Special2, tol)?)
    } else {
        None
    };
    let truth = Candidate::truth(&problem)?;
    let theorem =
        check_bound(&spec, &problem, &tuning, &solution, &BoundMode::Theorem { u: 0.5, candidate: truth }, tol)?;
    Ok(TrialDetail { spec, problem, tuning, solution, special1, special2, theorem, lambda2 })
}

fn record(cfg: &ExperimentConfig, trial: usize, outcome: Result<TrialDetail>, ms: f64) -> TrialRecord {
    let mut rec = TrialRecord {
        trial,
        estimator: cfg.estimator.label().into(),
        n: cfg.n,
        p: cfg.p,
        rho: cfg.design.rho(),
        noise: cfg.noise.label(),
        sigma: cfg.noise.sigma(),
        lambda: Vec::new(),
        lambda2: None,
        lhs: f64::NAN,
        rhs_special1: None,
        rhs_special2: None,
        rhs_theorem_u05: f64::NAN,
        holds_special1: None,
        holds_special2: None,
        holds_theorem_u05: false,
        certified: false,
        allowance: f64::NAN,
        kkt_residual: f64::NAN,
        fp_residual: f64::NAN,
        solver_iterations: 0,
        fp_iterations: 0,
        solve_ms: ms,
        failure: None,
    };
    match outcome {
        Err(e) => rec.failure = Some(e.to_string()),
        Ok(d) => {
            rec.lambda = d.tuning.lambda.clone();
            rec.lambda2 = d.lambda2;
            rec.lhs = d.theorem.lhs;
            rec.rhs_special1 = d.special1.as_ref().map(|r| r.rhs);
            rec.rhs_special2 = d.special2.as_ref().map(|r| r.rhs);
            rec.rhs_theorem_u05 = d.theorem.rhs;
            rec.holds_special1 = d.special1.as_ref().map(|r| r.holds);
            rec.holds_special2 = d.special2.as_ref().map(|r| r.holds);
            rec.holds_theorem_u05 = d.theorem.holds;
            rec.certified = d.theorem.certified;
            rec.allowance = d.theorem.allowance;
            rec.kkt_residual = d.solution.kkt_residual;
            rec.fp_residual = d.tuning.fixed_point_residual;
            rec.solver_iterations = d.solution.iterations;
            rec.fp_iterations = d.tuning.iterations;
        }
    }
    rec
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub estimator: String,
    pub trials: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub failure_budget_exceeded: bool,
    pub certified: usize,
    pub holds_special1: usize,
    pub holds_special2: usize,
    pub holds_theorem_u05: usize,
    /// Certified trials with a violated bound.
    pub violations: usize,
    /// Median over trials of `max_j λ_j`.
    pub median_lambda: f64,
    pub median_lhs: f64,
    pub median_rhs_special2: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Campaign {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub summary: CampaignSummary,
}

/// Median of the finite entries; NaN when there are none.
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn summarize(cfg: &ExperimentConfig, records: &[TrialRecord]) -> CampaignSummary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.failure.is_none()).collect();
    let failures = records.len() - ok.len();
    let failure_rate = failures as f64 / records.len() as f64;
    let count = |f: &dyn Fn(&TrialRecord) -> bool| ok.iter().filter(|r| f(r)).count();
    let has_special2 = ok.iter().any(|r| r.rhs_special2.is_some());
    CampaignSummary {
        estimator: cfg.estimator.label().into(),
        trials: records.len(),
        failures,
        failure_rate,
        failure_budget_exceeded: failure_rate > MAX_FAILURE_RATE,
        certified: count(&|r| r.certified),
        holds_special1: count(&|r| r.holds_special1 == Some(true)),
        holds_special2: count(&|r| r.holds_special2 == Some(true)),
        holds_theorem_u05: count(&|r| r.holds_theorem_u05),
        violations: count(&|r| r.is_violation()),
        median_lambda: median(ok.iter().map(|r| r.lambda.iter().copied().fold(f64::NEG_INFINITY, f64::max))),
        median_lhs: median(ok.iter().map(|r| r.lhs)),
        median_rhs_special2: has_special2.then(|| median(ok.iter().filter_map(|r| r.rhs_special2))),
    }
}

/// Runs every trial (in parallel on the current rayon pool) and merges the
/// records in trial order. Per-trial failures are recorded, not raised.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<Campaign> {
    cfg.validate()?;
    if let DesignKind::CustomFile { path } = &cfg.design {
        return Err(Error::InvalidInput(format!("design file {} has not been loaded", path.display())));
    }
    let sigma = cfg.noise.sigma();
    let template = cfg.estimator.build(cfg.n, cfg.p, sigma)?;
    cfg.constants(template.penalty.len())?;
    let records: Vec<TrialRecord> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let start = Instant::now();
            let outcome = run_trial(cfg, &template, trial);
            let ms = start.elapsed().as_secs_f64() * 1e3;
            if let Err(e) = &outcome {
                log::debug!("{} trial {trial} failed: {e}", cfg.estimator.label());
            }
            record(cfg, trial, outcome, ms)
        })
        .collect();
    let summary = summarize(cfg, &records);
    log::info!(
        "{}: {}/{} trials, {} failures, {} violations",
        summary.estimator,
        summary.trials - summary.failures,
        summary.trials,
        summary.failures,
        summary.violations
    );
    Ok(Campaign { config: cfg.clone(), records, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: EstimatorKind) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, 20, 10);
        cfg.trials = 4;
        cfg.seed = 3;
        cfg
    }

    #[test]
    fn lasso_campaign_holds() {
        let c = run_monte_carlo(&small(EstimatorKind::Lasso)).unwrap();
        assert_eq!(c.records.len(), 4);
        assert_eq!(c.summary.failures, 0);
        assert_eq!(c.summary.holds_special2, 4);
        assert_eq!(c.summary.violations, 0);
        assert!(c.records.iter().enumerate().all(|(i, r)| r.trial == i));
    }

    #[test]
    fn deterministic_records() {
        let cfg = small(EstimatorKind::SqrtLasso);
        let strip = |mut c: Campaign| {
            c.records.iter_mut().for_each(|r| r.solve_ms = 0.0);
            c.records
        };
        assert_eq!(strip(run_monte_carlo(&cfg).unwrap()), strip(run_monte_carlo(&cfg).unwrap()));
    }

    #[test]
    fn config_validation() {
        let mut cfg = small(EstimatorKind::TrendFilter { order: 1 });
        assert!(cfg.validate().is_err());
        cfg.design = DesignKind::Identity;
        assert!(cfg.validate().is_err());
        cfg.p = cfg.n;
        cfg.validate().unwrap();
        let bad: std::result::Result<ExperimentConfig, _> =
            serde_json::from_str(r#"{"estimator":{"label":"lasso"},"n":10,"p":5,"trails":3}"#);
        assert!(bad.unwrap_err().to_string().contains("trails"));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median([f64::NAN]).is_nan());
    }
}
