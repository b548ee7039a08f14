//! Link functions, penalties, problems and the estimator catalog.

mod estimator;
mod link;
mod penalty;
mod problem;

pub use estimator::{
    make_elastic_net_augmented, make_fused, make_group_lasso, make_lasso, make_slope, make_sqrt_lasso,
    make_tailored_lasso, make_trend_filter, objective, DesignRequirement, EstimatorSpec,
};
pub use link::LinkFunction;
pub use penalty::{PenaltySpec, PenaltyTerm, Structure, TermNorm};
pub use problem::{Problem, Truth};
