//! The five subcommands. Each returns its exit code and the files it wrote.

use std::path::{Path, PathBuf};

use pblab::bounds::{check_bound, BoundMode, Candidate};
use pblab::experiments::{catalog, run_monte_carlo, EstimatorKind, ExperimentConfig, NoiseKind};
use pblab::model::{EstimatorSpec, Problem};
use pblab::solvers::{solve, Solution};
use pblab::tuning::{oracle_solution, FixedPointStep, OracleTuning};
use serde::Serialize;

use crate::config::{ModeName, RunConfig};
use crate::output::{bound_row, config_hash, trial_row, write_csv, write_json, BOUND_HEADER, TRIAL_HEADER};
use crate::CliError;

pub struct Outcome {
    pub exit_code: i32,
    pub outputs: Vec<PathBuf>,
}

/// Identifies the effective configuration in the manifest.
pub struct Prepared<C> {
    pub config: C,
    pub hash: String,
}

impl<C: Serialize> Prepared<C> {
    pub fn new(config: C) -> Self {
        let hash = config_hash(&config);
        Prepared { config, hash }
    }
}

/// Problem, adapted problem and template spec for a single-instance command.
struct Instance {
    problem: Problem<f64>,
    lambda2: Option<f64>,
    template: EstimatorSpec<f64>,
}

fn instance(cfg: &RunConfig, base: &Path) -> Result<Instance, CliError> {
    let raw = cfg.problem(base)?;
    let sigma = match &cfg.generator {
        Some(g) if cfg.data.is_none() => g.noise.sigma(),
        _ => 1.0,
    };
    let template = cfg.estimator.build(raw.n(), raw.p(), sigma)?;
    let (problem, lambda2) = cfg.estimator.prepare(&raw)?;
    Ok(Instance { problem, lambda2, template })
}

fn broadcast(values: &[f64], k: usize, what: &str) -> Result<Vec<f64>, CliError> {
    match values.len() {
        1 => Ok(vec![values[0]; k]),
        len if len == k => Ok(values.to_vec()),
        len => Err(CliError::Config(format!("{what} needs 1 or {k} values, got {len}"))),
    }
}

fn constants(cfg: &RunConfig, k: usize) -> Result<Vec<f64>, CliError> {
    if cfg.c.is_empty() {
        Ok(vec![1.0; k])
    } else {
        broadcast(&cfg.c, k, "c")
    }
}

#[derive(Serialize)]
struct SolutionDoc<'a> {
    estimator: &'a EstimatorKind,
    lambda: &'a [f64],
    lambda2: Option<f64>,
    beta: &'a [f64],
    objective: f64,
    kkt_residual: f64,
    converged: bool,
    iterations: usize,
    method: pblab::solvers::Method,
}

impl<'a> SolutionDoc<'a> {
    fn new(kind: &'a EstimatorKind, lambda: &'a [f64], lambda2: Option<f64>, s: &'a Solution<f64>) -> Self {
        SolutionDoc {
            estimator: kind,
            lambda,
            lambda2,
            beta: &s.beta,
            objective: s.objective,
            kkt_residual: s.kkt_residual,
            converged: s.converged,
            iterations: s.iterations,
            method: s.method,
        }
    }
}

pub fn solve_cmd(run: &Prepared<RunConfig>, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    if cfg.lambda.is_empty() {
        return Err(CliError::Config("solve needs tuning parameters: pass --lambda or set 'lambda'".into()));
    }
    let inst = instance(cfg, base)?;
    let lambda = broadcast(&cfg.lambda, inst.template.penalty.len(), "lambda")?;
    let spec = inst.template.with_lambdas(&lambda)?;
    let sol = solve(&spec, &inst.problem, &cfg.solver)?;
    let path = out.join("solution.json");
    write_json(&path, &SolutionDoc::new(&cfg.estimator, &lambda, inst.lambda2, &sol))?;
    if !sol.converged {
        log::error!("solver stopped at KKT residual {:e} above tol {:e}", sol.kkt_residual, cfg.solver.tol);
    }
    Ok(Outcome { exit_code: if sol.converged { 0 } else { 3 }, outputs: vec![path] })
}

#[derive(Serialize)]
struct TuningDoc<'a> {
    estimator: &'a EstimatorKind,
    c: &'a [f64],
    lambda: &'a [f64],
    lambda2: Option<f64>,
    dual_terms: &'a [f64],
    fixed_point_residual: f64,
    iterations: usize,
    bracketed: bool,
    trace: &'a [FixedPointStep<f64>],
    solution: SolutionDoc<'a>,
}

pub fn tune_cmd(run: &Prepared<RunConfig>, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let inst = instance(cfg, base)?;
    let c = constants(cfg, inst.template.penalty.len())?;
    let (t, sol) = oracle_solution(&inst.template, &inst.problem, &c, &cfg.solver, &cfg.fixed_point)?;
    let path = out.join("tuning.json");
    write_json(
        &path,
        &TuningDoc {
            estimator: &cfg.estimator,
            c: &t.c,
            lambda: &t.lambda,
            lambda2: inst.lambda2,
            dual_terms: &t.dual_terms,
            fixed_point_residual: t.fixed_point_residual,
            iterations: t.iterations,
            bracketed: t.bracketed,
            trace: &t.trace,
            solution: SolutionDoc::new(&cfg.estimator, &t.lambda, inst.lambda2, &sol),
        },
    )?;
    Ok(Outcome { exit_code: if sol.converged { 0 } else { 3 }, outputs: vec![path] })
}

/// Spec, tuning and solution to be checked: the oracle tuning unless `λ` is
/// given explicitly (or fixed by the catalog entry), in which case the
/// reports are flagged as not certified.
fn fitted(
    cfg: &RunConfig,
    inst: &Instance,
    c: &[f64],
) -> Result<(EstimatorSpec<f64>, OracleTuning<f64>, Solution<f64>), CliError> {
    let (tuning, sol) = oracle_solution(&inst.template, &inst.problem, c, &cfg.solver, &cfg.fixed_point)?;
    if !cfg.lambda.is_empty() {
        let lambda = broadcast(&cfg.lambda, inst.template.penalty.len(), "lambda")?;
        let spec = inst.template.with_lambdas(&lambda)?;
        let sol = solve(&spec, &inst.problem, &cfg.solver)?;
        return Ok((spec, tuning, sol));
    }
    if !cfg.estimator.oracle_tuned() {
        let sol = solve(&inst.template, &inst.problem, &cfg.solver)?;
        return Ok((inst.template.clone(), tuning, sol));
    }
    Ok((inst.template.with_lambdas(&tuning.lambda)?, tuning, sol))
}

pub fn verify_cmd(run: &Prepared<RunConfig>, base: &Path, out: &Path) -> Result<Outcome, CliError> {
    let cfg = &run.config;
    let inst = instance(cfg, base)?;
    let c = constants(cfg, inst.template.penalty.len())?;
    let (spec, tuning, sol) = fitted(cfg, &inst, &c)?;
    let mut candidates = cfg.candidates.clone();
    candidates.push(Candidate::new("beta_hat", sol.beta.clone()));
    let mode = match cfg.mode.unwrap_or(ModeName::Special2) {
        ModeName::Special2 => BoundMode::Special2,
        ModeName::Special1 => BoundMode::Special1 { candidates },
        ModeName::La => BoundMode::La { candidates },
        ModeName::Theorem => {
            let u = cfg.u.unwrap_or(0.5);
            if !(u > 0.0 && u < 1.0) {
                return Err(CliError::Config(format!("u must lie in (0, 1), got {u}")));
            }
            BoundMode::Theorem { u, candidate: Candidate::truth(&inst.problem)? }
        }
    };
    let report = check_bound(&spec, &inst.problem, &tuning, &sol, &mode, cfg.solver.tol)?;
    if !report.certified {
        log::warn!("report is not a certificate: {}", report.note.as_deref().unwrap_or("uncertified"));
    }
    let path = out.join("bounds.csv");
    write_csv(&path, &BOUND_HEADER, [bound_row(&report)])?;
    Ok(Outcome { exit_code: if report.holds { 0 } else { 5 }, outputs: vec![path] })
}

#[derive(Serialize)]
struct FailureDoc<'a> {
    trial: usize,
    message: &'a str,
}

#[derive(Serialize)]
struct CampaignDoc<'a> {
    config: &'a ExperimentConfig,
    summary: &'a pblab::experiments::CampaignSummary,
    failures: Vec<FailureDoc<'a>>,
    /// Trials whose reports are not certificates (fixed tuning).
    uncertified: Vec<usize>,
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    campaigns: Vec<CampaignDoc<'a>>,
    trials: usize,
    failures: usize,
    violations: usize,
    failure_budget_exceeded: bool,
    passed: bool,
}

pub fn campaign_cmd(
    run: &Prepared<Vec<ExperimentConfig>>,
    jobs: usize,
    timing: bool,
    out: &Path,
) -> Result<Outcome, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {jobs} worker threads: {e}")))?;
    let mut campaigns = Vec::new();
    for cfg in &run.config {
        log::info!("campaign {} n={} p={} trials={}", cfg.estimator.label(), cfg.n, cfg.p, cfg.trials);
        campaigns.push(pool.install(|| run_monte_carlo(cfg))?);
    }
    let csv_path = out.join("records.csv");
    write_csv(&csv_path, &TRIAL_HEADER, campaigns.iter().flat_map(|c| c.records.iter().map(|r| trial_row(r, timing))))?;
    let docs: Vec<CampaignDoc> = campaigns
        .iter()
        .map(|c| CampaignDoc {
            config: &c.config,
            summary: &c.summary,
            failures: c
                .records
                .iter()
                .filter_map(|r| r.failure.as_deref().map(|m| FailureDoc { trial: r.trial, message: m }))
                .collect(),
            uncertified: c.records.iter().filter(|r| r.failure.is_none() && !r.certified).map(|r| r.trial).collect(),
        })
        .collect();
    let violations: usize = campaigns.iter().map(|c| c.summary.violations).sum();
    let budget = campaigns.iter().any(|c| c.summary.failure_budget_exceeded);
    let summary = SummaryDoc {
        trials: campaigns.iter().map(|c| c.summary.trials).sum(),
        failures: campaigns.iter().map(|c| c.summary.failures).sum(),
        violations,
        failure_budget_exceeded: budget,
        passed: violations == 0 && !budget,
        campaigns: docs,
    };
    let summary_path = out.join("summary.json");
    write_json(&summary_path, &summary)?;
    let exit_code = if violations > 0 {
        log::error!("{violations} certified trials violate a bound");
        5
    } else if budget {
        log::error!("more than 1% of the trials failed in at least one campaign");
        3
    } else {
        0
    };
    Ok(Outcome { exit_code, outputs: vec![csv_path, summary_path] })
}

pub fn catalog_cmd(out: &Path) -> Result<Outcome, CliError> {
    let entries = catalog();
    let text = serde_json::to_string_pretty(&entries).map_err(|e| CliError::Io(e.to_string()))?;
    println!("{text}");
    let path = out.join("catalog.json");
    write_json(&path, &entries)?;
    Ok(Outcome { exit_code: 0, outputs: vec![path] })
}

/// Default campaign for `campaign --estimator <label>` without a config file.
pub fn default_campaign(kind: EstimatorKind) -> ExperimentConfig {
    let mut cfg = if kind.needs_identity_design() {
        let mut c = ExperimentConfig::new(kind, 100, 100);
        c.design = pblab::experiments::DesignKind::Identity;
        c
    } else {
        ExperimentConfig::new(kind, 50, 100)
    };
    cfg.noise = NoiseKind::Gaussian { sigma: 1.0 };
    cfg
}
