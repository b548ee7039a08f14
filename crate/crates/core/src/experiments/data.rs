//! Synthetic designs, noise and sparse truths.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Independent random stream for `(seed, trial, purpose)`.
pub fn stream(seed: u64, trial: u64, purpose: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial.wrapping_mul(64).wrapping_add(purpose));
    rng
}

/// Stream purposes within one trial.
pub mod purpose {
    pub const DESIGN: u64 = 0;
    pub const NOISE: u64 = 1;
    pub const LAMBDA: u64 = 2;
    pub const EXTRA: u64 = 3;
}

/// Equicorrelated Gaussian rows, columns rescaled to squared norm `n`.
pub fn generate_design(n: usize, p: usize, rho: f64, seed: u64) -> Result<Matrix<f64>> {
    design_from_stream(n, p, rho, seed, 0)
}

pub(crate) fn design_from_stream(n: usize, p: usize, rho: f64, seed: u64, trial: u64) -> Result<Matrix<f64>> {
    if n == 0 || p == 0 {
        return Err(Error::InvalidInput(format!("design must be at least 1x1, got {n}x{p}")));
    }
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidInput(format!("equicorrelation rho must lie in [0, 1), got {rho}")));
    }
    let mut attempt = 0u64;
    loop {
        let mut rng = stream(seed, trial, purpose::DESIGN + 16 * attempt);
        let (a, b) = (rho.sqrt(), (1.0 - rho).sqrt());
        let mut x = Matrix::zeros(n, p);
        for i in 0..n {
            let shared: f64 = rng.sample(StandardNormal);
            for j in 0..p {
                let own: f64 = rng.sample(StandardNormal);
                x[(i, j)] = a * shared + b * own;
            }
        }
        if normalize_columns(&mut x) {
            return Ok(x);
        }
        attempt += 1;
    }
}

/// Rescales every column to squared norm `n`; false if a column is zero.
pub fn normalize_columns(x: &mut Matrix<f64>) -> bool {
    let (n, p) = x.shape();
    for j in 0..p {
        let norm = (0..n).map(|i| x[(i, j)] * x[(i, j)]).sum::<f64>().sqrt();
        if norm == 0.0 {
            return false;
        }
        let s = (n as f64).sqrt() / norm;
        for i in 0..n {
            x[(i, j)] *= s;
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    StudentT { df: f64, scale: f64 },
}

impl NoiseKind {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseKind::Gaussian { sigma } if !(sigma > 0.0) || !sigma.is_finite() => Err(Error::InvalidInput(
                format!("gaussian noise needs sigma > 0 (a zero noise vector violates the nondegeneracy assumption), got {sigma}"),
            )),
            NoiseKind::StudentT { df, scale } if !(df > 0.0) || !(scale > 0.0) || !df.is_finite() || !scale.is_finite() => {
                Err(Error::InvalidInput(format!("student-t noise needs df > 0 and scale > 0, got df={df}, scale={scale}")))
            }
            _ => Ok(()),
        }
    }

    /// Scale parameter reported in records (`σ` or the t scale).
    pub fn sigma(&self) -> f64 {
        match *self {
            NoiseKind::Gaussian { sigma } => sigma,
            NoiseKind::StudentT { scale, .. } => scale,
        }
    }

    pub fn label(&self) -> String {
        match *self {
            NoiseKind::Gaussian { .. } => "gaussian".into(),
            NoiseKind::StudentT { df, .. } => format!("student_t({df})"),
        }
    }

    pub fn with_sigma(&self, s: f64) -> Self {
        match *self {
            NoiseKind::Gaussian { .. } => NoiseKind::Gaussian { sigma: s },
            NoiseKind::StudentT { df, .. } => NoiseKind::StudentT { df, scale: s },
        }
    }
}

pub fn generate_noise(kind: NoiseKind, n: usize, seed: u64) -> Result<Vec<f64>> {
    noise_from_rng(kind, n, &mut stream(seed, 0, purpose::NOISE))
}

pub(crate) fn noise_from_rng<R: Rng>(kind: NoiseKind, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    kind.validate()?;
    Ok(match kind {
        NoiseKind::Gaussian { sigma } => (0..n).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect(),
        NoiseKind::StudentT { df, scale } => {
            let t = StudentT::new(df).map_err(|e| Error::InvalidInput(e.to_string()))?;
            (0..n).map(|_| scale * t.sample(rng)).collect()
        }
    })
}

/// `β*` with the first `s` entries equal to `amplitude`.
pub fn make_beta_star(p: usize, s: usize, amplitude: f64) -> Result<Vec<f64>> {
    if s > p {
        return Err(Error::InvalidInput(format!("sparsity s = {s} exceeds p = {p}")));
    }
    Ok((0..p).map(|j| if j < s { amplitude } else { 0.0 }).collect())
}
