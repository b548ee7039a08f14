//! Composite-norm penalized regression
//! `β̂ ∈ argmin g(‖Y − Xβ‖²) + Σ_j λ_j ‖M_j β‖_{q_j}`, oracle tuning
//! parameters, and numerical certification of prediction bounds.
//!
//! The numerical core is generic over [`real::Real`] (`f32` or `f64`). The
//! aliases below fix the scalar to `f64`, which is what the experiments and
//! the command line use.

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod real;
pub mod solvers;
pub mod tuning;

pub use error::{Error, Result};
pub use real::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type Problem = model::Problem<f64>;
pub type EstimatorSpec = model::EstimatorSpec<f64>;
pub type PenaltySpec = model::PenaltySpec<f64>;
pub type Solution = solvers::Solution<f64>;
pub type OracleTuning = tuning::OracleTuning<f64>;
pub type BoundReport = bounds::BoundReport<f64>;
pub type BoundMode = bounds::BoundMode<f64>;
pub type Candidate = bounds::Candidate<f64>;
