use serde::{Deserialize, Serialize};

use crate::error::{dim_mismatch, Error, Result};
use crate::linalg::{vector, Matrix};
use crate::real::Real;

/// Ground truth of a synthetic problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth<T> {
    pub beta_star: Vec<T>,
    pub eps: Vec<T>,
}

/// Regression data `Y = X β* + ε`.
///
/// `n` is the sample size used to normalize prediction errors. It equals the
/// number of rows except for augmented problems (elastic net), where only the
/// first `n` rows are observations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Problem<T> {
    pub x: Matrix<T>,
    pub y: Vec<T>,
    pub truth: Option<Truth<T>>,
    pub seed: u64,
    n: usize,
}

impl<T: Real> Problem<T> {
    /// Observed data only. Rejects `Y = 0`.
    pub fn new(x: Matrix<T>, y: Vec<T>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(dim_mismatch("response length", x.nrows(), y.len()));
        }
        if !x.is_finite() || !vector::is_finite(&y) {
            return Err(Error::InvalidInput("non-finite design or response".into()));
        }
        if y.iter().all(|v| *v == T::zero()) {
            return Err(Error::AssumptionViolated("response Y is identically zero".into()));
        }
        let n = x.nrows();
        Ok(Problem { x, y, truth: None, seed: 0, n })
    }

    /// Forms `Y = X β* + ε` and keeps the truth for oracle computations.
    pub fn from_truth(x: Matrix<T>, beta_star: Vec<T>, eps: Vec<T>) -> Result<Self> {
        if beta_star.len() != x.ncols() {
            return Err(dim_mismatch("beta_star length", x.ncols(), beta_star.len()));
        }
        if eps.len() != x.nrows() {
            return Err(dim_mismatch("noise length", x.nrows(), eps.len()));
        }
        if !vector::is_finite(&beta_star) || !vector::is_finite(&eps) {
            return Err(Error::InvalidInput("non-finite beta_star or noise".into()));
        }
        let y = vector::add(&x.matvec(&beta_star), &eps);
        let mut prob = Self::new(x, y)?;
        prob.truth = Some(Truth { beta_star, eps });
        Ok(prob)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// Sets the normalizing sample size (number of leading observation rows).
    pub fn with_sample_size(mut self, n: usize) -> Result<Self> {
        if n == 0 || n > self.x.nrows() {
            return Err(Error::InvalidInput(format!("sample size {n} outside 1..={}", self.x.nrows())));
        }
        self.n = n;
        Ok(self)
    }

    /// Normalizing sample size.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn truth(&self) -> Result<&Truth<T>> {
        self.truth
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("this operation needs the ground truth (beta_star, eps)".into()))
    }

    /// `Y − X β`.
    pub fn residual(&self, beta: &[T]) -> Vec<T> {
        vector::sub(&self.y, &self.x.matvec(beta))
    }

    pub(crate) fn check_beta(&self, beta: &[T]) -> Result<()> {
        if beta.len() != self.p() {
            return Err(dim_mismatch("coefficient vector", self.p(), beta.len()));
        }
        Ok(())
    }
}
