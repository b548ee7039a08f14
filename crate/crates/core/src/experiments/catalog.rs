//! Named estimators used by campaigns and the command line.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{vector, Matrix};
use crate::model::{
    make_elastic_net_augmented, make_fused, make_group_lasso, make_lasso, make_slope, make_sqrt_lasso,
    make_trend_filter, EstimatorSpec, LinkFunction, Problem,
};

pub const DEFAULT_GROUP_SIZE: usize = 5;

/// Fixed slope tuning parameter, just above `4 + √2`.
pub const SLOPE_FIXED_LAMBDA: f64 = 4.0 + std::f64::consts::SQRT_2 + 0.01;

/// How the elastic net's ridge parameter is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RidgeChoice {
    /// Minimizes `‖Xᵀε − λ₂β*‖∞` over `λ₂ ≥ 0`.
    #[default]
    Oracle,
    Fixed(f64),
}

/// How the slope tuning parameter is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlopeLambda {
    /// `λ = 2c · J*_ω(Xᵀε)`, the dual sorted-ℓ1 norm of the noise correlations.
    #[default]
    Oracle,
    /// A fixed value such as [`SLOPE_FIXED_LAMBDA`]; reports are then flagged as not certified.
    Fixed(f64),
}

fn default_group_size() -> usize {
    DEFAULT_GROUP_SIZE
}

fn default_order() -> usize {
    1
}

/// A catalog estimator together with its structural parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "label", rename_all = "kebab-case")]
pub enum EstimatorKind {
    Lasso,
    SqrtLasso,
    GroupLasso {
        #[serde(default = "default_group_size")]
        group_size: usize,
    },
    GroupSqrtLasso {
        #[serde(default = "default_group_size")]
        group_size: usize,
    },
    ElasticNet {
        #[serde(default)]
        lambda2: RidgeChoice,
    },
    Slope {
        #[serde(default)]
        lambda: SlopeLambda,
    },
    Fused,
    TrendFilter {
        #[serde(default = "default_order")]
        order: usize,
    },
}

pub const LABELS: [&str; 8] =
    ["lasso", "sqrt-lasso", "group-lasso", "group-sqrt-lasso", "elastic-net", "slope", "fused", "trend-filter"];

impl EstimatorKind {
    /// Catalog entry with default parameters.
    pub fn from_label(label: &str) -> Result<Self> {
        Ok(match label {
            "lasso" => EstimatorKind::Lasso,
            "sqrt-lasso" => EstimatorKind::SqrtLasso,
            "group-lasso" => EstimatorKind::GroupLasso { group_size: DEFAULT_GROUP_SIZE },
            "group-sqrt-lasso" => EstimatorKind::GroupSqrtLasso { group_size: DEFAULT_GROUP_SIZE },
            "elastic-net" => EstimatorKind::ElasticNet { lambda2: RidgeChoice::Oracle },
            "slope" => EstimatorKind::Slope { lambda: SlopeLambda::Oracle },
            "fused" => EstimatorKind::Fused,
            "trend-filter" => EstimatorKind::TrendFilter { order: 1 },
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown estimator '{other}'; expected one of {}",
                    LABELS.join(", ")
                )))
            }
        })
    }

    pub fn label(&self) -> &'static str {
        match self {
            EstimatorKind::Lasso => "lasso",
            EstimatorKind::SqrtLasso => "sqrt-lasso",
            EstimatorKind::GroupLasso { .. } => "group-lasso",
            EstimatorKind::GroupSqrtLasso { .. } => "group-sqrt-lasso",
            EstimatorKind::ElasticNet { .. } => "elastic-net",
            EstimatorKind::Slope { .. } => "slope",
            EstimatorKind::Fused => "fused",
            EstimatorKind::TrendFilter { .. } => "trend-filter",
        }
    }

    /// Whether `X` must be the identity.
    pub fn needs_identity_design(&self) -> bool {
        matches!(self, EstimatorKind::TrendFilter { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            EstimatorKind::GroupLasso { group_size } | EstimatorKind::GroupSqrtLasso { group_size } if group_size == 0 => {
                Err(Error::InvalidInput("group_size must be at least 1".into()))
            }
            EstimatorKind::ElasticNet { lambda2: RidgeChoice::Fixed(l) } if !(l >= 0.0) || !l.is_finite() => {
                Err(Error::InvalidInput(format!("elastic-net lambda2 must be finite and nonnegative, got {l}")))
            }
            EstimatorKind::Slope { lambda: SlopeLambda::Fixed(l) } if !(l > 0.0) || !l.is_finite() => {
                Err(Error::InvalidInput(format!("slope lambda must be positive, got {l}")))
            }
            EstimatorKind::TrendFilter { order } if !(1..=3).contains(&order) => {
                Err(Error::InvalidInput(format!("trend-filter order must be 1, 2 or 3, got {order}")))
            }
            _ => Ok(()),
        }
    }

    /// Template estimator with unit tuning parameters.
    ///
    /// `sigma` only enters the slope weights.
    pub fn build(&self, n: usize, p: usize, sigma: f64) -> Result<EstimatorSpec<f64>> {
        self.validate()?;
        match *self {
            EstimatorKind::Lasso | EstimatorKind::ElasticNet { .. } => {
                let mut spec = make_lasso(p, 1.0)?;
                spec.name = self.label().into();
                Ok(spec)
            }
            EstimatorKind::SqrtLasso => make_sqrt_lasso(p, 1.0),
            EstimatorKind::GroupLasso { group_size } => {
                make_group_lasso(p, &consecutive_groups(p, group_size), &[1.0], LinkFunction::Identity)
            }
            EstimatorKind::GroupSqrtLasso { group_size } => {
                make_group_lasso(p, &consecutive_groups(p, group_size), &[1.0], LinkFunction::SquareRoot)
            }
            EstimatorKind::Slope { lambda } => {
                let l = match lambda {
                    SlopeLambda::Oracle => 1.0,
                    SlopeLambda::Fixed(l) => l,
                };
                make_slope(slope_weights(n, p, sigma)?, l, LinkFunction::Identity)
            }
            EstimatorKind::Fused => make_fused(p, 1.0),
            EstimatorKind::TrendFilter { order } => make_trend_filter(p, order, 1.0),
        }
    }

    /// Adapts a problem to the estimator. Only the elastic net changes it
    /// (augmentation); the chosen `λ₂` is returned alongside.
    pub fn prepare(&self, problem: &Problem<f64>) -> Result<(Problem<f64>, Option<f64>)> {
        match *self {
            EstimatorKind::ElasticNet { lambda2 } => {
                let l2 = match lambda2 {
                    RidgeChoice::Fixed(l) => l,
                    RidgeChoice::Oracle => {
                        let t = problem.truth()?;
                        elastic_net_lambda2(&problem.x, &t.eps, &t.beta_star)?
                    }
                };
                let (_, aug) = make_elastic_net_augmented(problem, 1.0, l2)?;
                Ok((aug, Some(l2)))
            }
            _ => Ok((problem.clone(), None)),
        }
    }

    /// Whether the catalog's tuning rule is the oracle tuning of the theory
    /// (false only for a fixed slope `λ`).
    pub fn oracle_tuned(&self) -> bool {
        !matches!(self, EstimatorKind::Slope { lambda: SlopeLambda::Fixed(_) })
    }
}

/// `{0..s}, {s..2s}, …`; the last group may be shorter.
pub fn consecutive_groups(p: usize, size: usize) -> Vec<Vec<usize>> {
    (0..p).step_by(size.max(1)).map(|start| (start..(start + size).min(p)).collect()).collect()
}

/// `ω_j = 2σ √(n log(2p/j))`, `j = 1..p`.
pub fn slope_weights(n: usize, p: usize, sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidInput(format!("slope weights need sigma > 0, got {sigma}")));
    }
    Ok((1..=p).map(|j| 2.0 * sigma * (n as f64 * (2.0 * p as f64 / j as f64).ln()).sqrt()).collect())
}

/// `argmin_{λ₂ ≥ 0} ‖Xᵀε − λ₂β*‖∞`, the ridge parameter giving the smallest
/// oracle `λ₁ = 2‖Xᵀε − λ₂β*‖∞`.
///
/// The objective is convex and piecewise linear; bisection on the sign of a
/// subgradient brackets a minimizer to machine precision.
pub fn elastic_net_lambda2(x: &Matrix<f64>, eps: &[f64], beta_star: &[f64]) -> Result<f64> {
    let a = x.tr_matvec(eps);
    if a.len() != beta_star.len() {
        return Err(crate::error::dim_mismatch("beta_star length", a.len(), beta_star.len()));
    }
    let bmax = vector::max_abs(beta_star);
    if bmax == 0.0 {
        return Ok(0.0);
    }
    let slope_at = |l: f64| {
        let (mut best, mut s) = (f64::NEG_INFINITY, 0.0);
        for (&aj, &bj) in a.iter().zip(beta_star) {
            let r = aj - l * bj;
            if r.abs() > best {
                best = r.abs();
                s = if r >= 0.0 { -bj } else { bj };
            }
        }
        s
    };
    if slope_at(0.0) >= 0.0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0, 2.0 * vector::max_abs(&a) / bmax);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope_at(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// One parameter of a catalog entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterSchema {
    pub name: String,
    pub kind: String,
    pub default: String,
    pub description: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub label: String,
    pub objective: String,
    pub link: String,
    pub parameters: Vec<ParameterSchema>,
}

fn param(name: &str, kind: &str, default: &str, description: &str) -> ParameterSchema {
    ParameterSchema { name: name.into(), kind: kind.into(), default: default.into(), description: description.into() }
}

/// Every estimator label with its objective and parameters.
pub fn catalog() -> Vec<CatalogEntry> {
    let entry = |label: &str, objective: &str, link: LinkFunction, parameters: Vec<ParameterSchema>| CatalogEntry {
        label: label.into(),
        objective: objective.into(),
        link: link.label().into(),
        parameters,
    };
    let group = || {
        vec![param("group_size", "integer >= 1", "5", "consecutive groups {0..s}, {s..2s}, ...; the last may be shorter")]
    };
    vec![
        entry("lasso", "||Y - Xb||^2 + lambda ||b||_1", LinkFunction::Identity, vec![]),
        entry("sqrt-lasso", "||Y - Xb|| + lambda ||b||_1", LinkFunction::SquareRoot, vec![]),
        entry("group-lasso", "||Y - Xb||^2 + sum_j lambda_j ||b_Gj||_2", LinkFunction::Identity, group()),
        entry("group-sqrt-lasso", "||Y - Xb|| + sum_j lambda_j ||b_Gj||_2", LinkFunction::SquareRoot, group()),
        entry(
            "elastic-net",
            "||Y - Xb||^2 + lambda1 ||b||_1 + lambda2 ||b||^2",
            LinkFunction::Identity,
            vec![param(
                "lambda2",
                "\"oracle\" | {\"fixed\": number >= 0}",
                "oracle",
                "ridge parameter; oracle minimizes ||X'e - lambda2 b*||_inf",
            )],
        ),
        entry(
            "slope",
            "||Y - Xb||^2 + lambda sum_i w_i |b|_(i), w_i = 2 sigma sqrt(n log(2p/i))",
            LinkFunction::Identity,
            vec![param(
                "lambda",
                "\"oracle\" | {\"fixed\": number > 0}",
                "oracle",
                "oracle uses 2c times the dual sorted-l1 norm of X'e; fixed 5.4242 is the classical choice",
            )],
        ),
        entry("fused", "||Y - Xb||^2 + lambda ||Db||_1 (first differences)", LinkFunction::Identity, vec![]),
        entry(
            "trend-filter",
            "||Y - b||^2 + lambda ||D^l b||_1, X = I",
            LinkFunction::Identity,
            vec![param("order", "1 | 2 | 3", "1", "difference order l")],
        ),
    ]
}
