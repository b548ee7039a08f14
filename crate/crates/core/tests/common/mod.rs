//! Independent oracles shared by the integration tests. Nothing here calls the
//! library's objective, prox or pseudoinverse code.

#![allow(dead_code)]

use pblab::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

pub fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| gaussian_vec(rng, p)).collect()
}

pub fn matvec(rows: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    rows.iter().map(|r| r.iter().zip(b).map(|(a, b)| a * b).sum()).collect()
}

pub fn rss(rows: &[Vec<f64>], y: &[f64], b: &[f64]) -> f64 {
    matvec(rows, b).iter().zip(y).map(|(f, y)| (y - f) * (y - f)).sum()
}

/// Penalties written out by hand.
#[derive(Clone, Debug)]
pub enum HandPenalty {
    L1,
    /// ℓ2 norms of consecutive blocks of the given size.
    Groups(usize),
    /// Sorted ℓ1 with non-increasing weights.
    Sorted(Vec<f64>),
    /// `Σ |β_{i+1} − β_i|`.
    TotalVariation,
}

impl HandPenalty {
    pub fn value(&self, b: &[f64]) -> f64 {
        match self {
            HandPenalty::L1 => b.iter().map(|v| v.abs()).sum(),
            HandPenalty::Groups(size) => b.chunks(*size).map(|g| g.iter().map(|v| v * v).sum::<f64>().sqrt()).sum(),
            HandPenalty::Sorted(w) => {
                let mut a: Vec<f64> = b.iter().map(|v| v.abs()).collect();
                a.sort_by(|x, y| y.partial_cmp(x).unwrap());
                a.iter().zip(w).map(|(a, w)| a * w).sum()
            }
            HandPenalty::TotalVariation => b.windows(2).map(|w| (w[1] - w[0]).abs()).sum(),
        }
    }
}

/// `g(‖Y − Xβ‖²) + λ·pen(β) + ridge·‖β‖²`.
pub struct HandObjective<'a> {
    pub rows: &'a [Vec<f64>],
    pub y: &'a [f64],
    pub sqrt_link: bool,
    pub lambda: f64,
    pub penalty: HandPenalty,
    pub ridge: f64,
}

impl HandObjective<'_> {
    pub fn eval(&self, b: &[f64]) -> f64 {
        let r = rss(self.rows, self.y, b);
        let fit = if self.sqrt_link { r.sqrt() } else { r };
        fit + self.lambda * self.penalty.value(b) + self.ridge * b.iter().map(|v| v * v).sum::<f64>()
    }
}

pub struct GridResult {
    pub beta: Vec<f64>,
    pub value: f64,
    /// The minimizer touched the outer box; the box was too small.
    pub on_boundary: bool,
}

fn for_each_point(center: &[f64], step: f64, half: i64, mut visit: impl FnMut(&[f64], bool)) {
    let p = center.len();
    let mut idx = vec![-half; p];
    let mut point = vec![0.0; p];
    loop {
        for j in 0..p {
            point[j] = center[j] + idx[j] as f64 * step;
        }
        let edge = idx.iter().any(|&i| i.abs() == half);
        visit(&point, edge);
        let mut j = 0;
        loop {
            if j == p {
                return;
            }
            idx[j] += 1;
            if idx[j] <= half {
                break;
            }
            idx[j] = -half;
            j += 1;
        }
    }
}

/// Coarse-to-fine grid search on `[−radius, radius]^p` ending at `final_step`.
///
/// The first level covers the whole box; every later level scans a
/// `(2·10 + 1)^p` window around the incumbent and recenters while the best
/// point sits on the window edge.
pub fn grid_minimize(f: impl Fn(&[f64]) -> f64, p: usize, radius: f64, final_step: f64) -> GridResult {
    let coarse_half = 16i64;
    let mut step = radius / coarse_half as f64;
    let mut best = vec![0.0; p];
    let mut best_val = f64::INFINITY;
    for_each_point(&vec![0.0; p], step, coarse_half, |pt, _| {
        let v = f(pt);
        if v < best_val {
            best_val = v;
            best = pt.to_vec();
        }
    });
    let half = 10i64;
    loop {
        step = (step / 5.0).max(final_step);
        for _ in 0..200 {
            let center = best.clone();
            let mut on_edge = false;
            for_each_point(&center, step, half, |pt, edge| {
                let v = f(pt);
                if v < best_val {
                    best_val = v;
                    best = pt.to_vec();
                    on_edge = edge;
                }
            });
            if !on_edge {
                break;
            }
        }
        if step <= final_step {
            break;
        }
    }
    let on_boundary = best.iter().any(|v| v.abs() >= radius - 2.0 * final_step);
    GridResult { beta: best, value: best_val, on_boundary }
}

/// Moore-Penrose inverse through nalgebra's SVD.
pub fn nalgebra_pinv(a: &Matrix) -> Matrix {
    let (r, c) = (a.nrows(), a.ncols());
    let m = nalgebra::DMatrix::from_fn(r, c, |i, j| a[(i, j)]);
    let svd = m.svd(true, true);
    let tol = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let pinv = svd.pseudo_inverse(tol).expect("both factors computed");
    let rows: Vec<Vec<f64>> = (0..c).map(|i| (0..r).map(|j| pinv[(i, j)]).collect()).collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut m: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    m
}

/// Largest violation of the four Penrose conditions, each measured relative
/// to `1 + max |entry|` of the matrix it should reproduce.
pub fn penrose_error(a: &Matrix, g: &Matrix) -> f64 {
    let ag = a.matmul(g).unwrap();
    let ga = g.matmul(a).unwrap();
    let aga = ag.matmul(a).unwrap();
    let gag = ga.matmul(g).unwrap();
    let rel = |x: &Matrix, y: &Matrix| max_abs_diff(x, y) / (1.0 + max_entry(y));
    [rel(&aga, a), rel(&gag, g), rel(&ag.transpose(), &ag), rel(&ga.transpose(), &ga)].into_iter().fold(0.0, f64::max)
}

fn max_entry(a: &Matrix) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..a.nrows() {
        for j in 0..a.ncols() {
            m = m.max(a[(i, j)].abs());
        }
    }
    m
}
