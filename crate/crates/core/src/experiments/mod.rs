//! Synthetic data, estimator catalog and Monte Carlo campaigns.

mod campaign;
mod catalog;
mod data;
mod studies;

pub use campaign::{
    draw_problem, median, run_monte_carlo, run_trial, Campaign, CampaignSummary, DesignKind, ExperimentConfig,
    TrialDetail, TrialRecord, TruthKind, MAX_FAILURE_RATE,
};
pub use catalog::{
    catalog, consecutive_groups, elastic_net_lambda2, slope_weights, CatalogEntry, EstimatorKind, ParameterSchema,
    RidgeChoice, SlopeLambda, DEFAULT_GROUP_SIZE, LABELS, SLOPE_FIXED_LAMBDA,
};
pub use data::{
    generate_design, generate_noise, make_beta_star, normalize_columns, purpose, stream, NoiseKind,
};
pub use studies::{
    rate_study_lasso, sigma_invariance_study_sqrt_lasso, RateRow, RateStudyConfig, SigmaRow, SigmaStudy,
    SigmaStudyConfig,
};
