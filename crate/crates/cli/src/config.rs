//! JSON inputs: run configurations, problem files and campaign files.

use std::path::{Path, PathBuf};

use pblab::bounds::Candidate;
use pblab::experiments::{
    draw_problem, DesignKind, EstimatorKind, ExperimentConfig, NoiseKind, TruthKind,
};
use pblab::model::Problem;
use pblab::solvers::SolverConfig;
use pblab::tuning::FixedPointConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Synthetic data for single-instance commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub n: usize,
    pub p: usize,
    #[serde(default)]
    pub design: DesignKind,
    #[serde(default = "default_noise")]
    pub noise: NoiseKind,
    #[serde(default)]
    pub beta_star: TruthKind,
}

fn default_noise() -> NoiseKind {
    NoiseKind::Gaussian { sigma: 1.0 }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum ModeName {
    Theorem,
    Special1,
    Special2,
    La,
}

/// Configuration of `solve`, `tune` and `verify`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub estimator: EstimatorKind,
    /// Problem file; takes precedence over `generator`.
    #[serde(default)]
    pub data: Option<PathBuf>,
    #[serde(default)]
    pub generator: Option<GeneratorConfig>,
    /// Tuning parameters for `solve` (one value is broadcast).
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub c: Vec<f64>,
    #[serde(default)]
    pub mode: Option<ModeName>,
    #[serde(default)]
    pub u: Option<f64>,
    /// Extra comparison points for `special1` and `la`.
    #[serde(default)]
    pub candidates: Vec<Candidate<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub fixed_point: FixedPointConfig,
}

impl RunConfig {
    pub fn new(estimator: EstimatorKind) -> Self {
        RunConfig {
            estimator,
            data: None,
            generator: None,
            lambda: Vec::new(),
            c: Vec::new(),
            mode: None,
            u: None,
            candidates: Vec::new(),
            seed: 0,
            solver: SolverConfig::default(),
            fixed_point: FixedPointConfig::default(),
        }
    }

    /// Loads the problem from `data` or draws it from `generator`.
    pub fn problem(&self, base: &Path) -> Result<Problem<f64>, CliError> {
        if let Some(path) = &self.data {
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            return load_problem(&full);
        }
        let Some(g) = &self.generator else {
            return Err(CliError::Config("no data: pass --data or generator settings (--n, --p)".into()));
        };
        let mut exp = ExperimentConfig::new(self.estimator.clone(), g.n, g.p);
        exp.design = g.design.clone();
        exp.noise = g.noise;
        exp.beta_star = g.beta_star.clone();
        exp.trials = 1;
        exp.seed = self.seed;
        exp.resolve_files(base)?;
        Ok(draw_problem(&exp, 0)?)
    }
}

/// `{"x": [[...]], "y": [...], "beta_star": [...], "eps": [...]}`.
///
/// `y` may be omitted when both `beta_star` and `eps` are present; if all
/// three are given they must satisfy `y = X beta_star + eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub x: Vec<Vec<f64>>,
    #[serde(default)]
    pub y: Option<Vec<f64>>,
    #[serde(default)]
    pub beta_star: Option<Vec<f64>>,
    #[serde(default)]
    pub eps: Option<Vec<f64>>,
}

impl ProblemFile {
    pub fn into_problem(self) -> Result<Problem<f64>, CliError> {
        let x = pblab::linalg::Matrix::from_rows(&self.x)?;
        match (self.y, self.beta_star, self.eps) {
            (y, Some(b), Some(e)) => {
                let prob = Problem::from_truth(x, b, e)?;
                if let Some(y) = y {
                    let scale = 1.0 + prob.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                    let off = prob.y.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
                    if y.len() != prob.y.len() || off > 1e-9 * scale {
                        return Err(CliError::Config("field 'y' disagrees with X beta_star + eps".into()));
                    }
                }
                Ok(prob)
            }
            (Some(y), None, None) => Ok(Problem::new(x, y)?),
            (None, _, _) => Err(CliError::Config("field 'y' is missing (or give both 'beta_star' and 'eps')".into())),
            _ => Err(CliError::Config("fields 'beta_star' and 'eps' must be given together".into())),
        }
    }
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn load_problem(path: &Path) -> Result<Problem<f64>, CliError> {
    read_json::<ProblemFile>(path)?.into_problem()
}

/// Reads a campaign file: one experiment or `{"campaigns": [...]}`.
///
/// Dispatches on the shape first so that errors name the offending field.
pub fn read_campaigns(path: &Path) -> Result<Vec<ExperimentConfig>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let err = |e: serde_json::Error| CliError::Config(format!("{}: {e}", path.display()));
    let configs = if value.get("campaigns").is_some() {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Many {
            campaigns: Vec<ExperimentConfig>,
        }
        serde_json::from_value::<Many>(value).map_err(err)?.campaigns
    } else {
        vec![serde_json::from_value::<ExperimentConfig>(value).map_err(err)?]
    };
    if configs.is_empty() {
        return Err(CliError::Config(format!("{}: 'campaigns' is empty", path.display())));
    }
    Ok(configs)
}
