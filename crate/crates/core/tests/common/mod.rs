#![allow(dead_code)]

use psnl_core::{FactorState, HyperParams, ShdiMatrix, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Rank-`f` data: `A*` uniform on [0, 1], each pair `i <= j` observed with
/// probability `density`, weight `a_i · a_j` plus Gaussian noise clipped at 0.
pub fn synthetic(n: usize, f: usize, density: f64, noise: f64, seed: u64) -> ShdiMatrix {
    let mut rng = rng(seed);
    let a: Vec<f64> = (0..n * f).map(|_| rng.gen()).collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.gen::<f64>() < density {
                let y: f64 = (0..f).map(|d| a[i * f + d] * a[j * f + d]).sum();
                let y = if noise > 0.0 {
                    y + noise * gaussian(&mut rng)
                } else {
                    y
                };
                edges.push((i, j, y.max(0.0)));
            }
        }
    }
    ShdiMatrix::from_edges(n, edges).unwrap()
}

/// Random nonnegative weights on a random pair set, self-loops included.
pub fn random_matrix(n: usize, density: f64, seed: u64) -> ShdiMatrix {
    let mut rng = rng(seed);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i..n {
            if rng.gen::<f64>() < density {
                edges.push((i, j, rng.gen::<f64>()));
            }
        }
    }
    ShdiMatrix::from_edges(n, edges).unwrap()
}

/// A state with arbitrary (not just initial) X, A, W values.
pub fn random_state(mat: &ShdiMatrix, rank: usize, seed: u64) -> FactorState {
    let mut rng = rng(seed);
    let len = mat.node_count() * rank;
    let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.2..1.0)).collect();
    let a: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
    let w: Vec<f64> = (0..len).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let mut state = FactorState::from_parts(mat.node_count(), rank, a, Some(x), Some(w)).unwrap();
    state.refresh_residuals(mat);
    state
}

pub fn random_hyper(seed: u64) -> HyperParams {
    let mut rng = rng(seed);
    HyperParams {
        lambda: rng.gen_range(0.001..0.5),
        gamma: rng.gen_range(0.05..2.0),
        mu: rng.gen_range(0.05..2.0),
        eta: rng.gen_range(0.1..1.5),
    }
}

pub fn config(rank: usize) -> TrainConfig {
    TrainConfig {
        rank,
        ..TrainConfig::default()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The quadratic that `x_{m,d}` minimizes, evaluated from the full factor
/// matrices rather than the residual cache. `before` is the state as
/// `update_column_x` received it; the neighbours' column `d` comes from it
/// (Jacobi snapshot) and so does the proximal anchor.
pub struct RowQuadratic {
    /// (target with column d removed, snapshot x_{n,d}) per neighbour.
    terms: Vec<(f64, f64)>,
    lambda: f64,
    alpha: f64,
    mu: f64,
    a: f64,
    w: f64,
    anchor: f64,
}

impl RowQuadratic {
    pub fn new(
        before: &FactorState,
        mat: &ShdiMatrix,
        hp: &HyperParams,
        mu: f64,
        m: usize,
        d: usize,
    ) -> Self {
        let f = before.rank();
        let xm = before.x_row(m);
        let terms = mat
            .neighbors(m)
            .unwrap()
            .iter()
            .map(|nb| {
                let xn = before.x_row(nb.node);
                let others: f64 = (0..f).filter(|&l| l != d).map(|l| xm[l] * xn[l]).sum();
                (nb.weight - others, xn[d])
            })
            .collect();
        RowQuadratic {
            terms,
            lambda: hp.lambda,
            alpha: psnl_core::alpha(hp, mat.degree(m)),
            mu,
            a: before.a()[m * f + d],
            w: before.w()[m * f + d],
            anchor: xm[d],
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let fit: f64 = self
            .terms
            .iter()
            .map(|&(t, xn)| 0.5 * ((t - x * xn).powi(2) + self.lambda * x * x))
            .sum();
        fit + self.w * (x - self.a)
            + 0.5 * self.alpha * (x - self.a).powi(2)
            + 0.5 * self.mu * (x - self.anchor).powi(2)
    }

    /// Sum of magnitudes of the gradient's additive terms at `x`.
    pub fn gradient_scale(&self, x: f64) -> f64 {
        let fit: f64 = self
            .terms
            .iter()
            .map(|&(t, xn)| ((t - x * xn) * xn).abs() + self.lambda * x.abs())
            .sum();
        fit + self.w.abs() + self.alpha * (x - self.a).abs() + self.mu * (x - self.anchor).abs()
    }
}

pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}
