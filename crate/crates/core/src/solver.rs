//! Element-wise proximal ADMM learning of nonnegative symmetric latent factors.
//!
//! The model approximates every known entry as `ŷ_{m,n} = Σ_d a_{m,d} a_{n,d}`
//! with a single nonnegative factor matrix `A`. Nonnegativity is split off
//! through an unconstrained copy `X` tied to `A` by multipliers `W`, and a
//! proximal term `(μ/2)‖X − X^k‖²` anchors each `X` update at the previous
//! iterate. One sweep visits the `f` columns in ascending order; for column
//! `d` it runs three jobs:
//!
//! ```text
//! x[m,d] <- ( Σ_{n∈Λ(m)} (y_mn − Σ_{l≠d} x_ml x_nl) x̂_nd + α_m a_md − w_md + μ x̂_md )
//!           / ( Σ_{n∈Λ(m)} (x̂_nd² + λ) + α_m + μ )
//! a[m,d] <- max(0, x_md + w_md / α_m)
//! w[m,d] <- w_md + η α_m (x_md − a_md)
//! ```
//!
//! where `x̂_{·,d}` is a snapshot of column `d` taken before any row is
//! written (Jacobi within a column, Gauss–Seidel across columns) and
//! `α_m = γ·max(1, |Λ(m)|)`.
//!
//! The inner sum `Σ_{l≠d}` is never formed directly: every known entry keeps
//! a cached residual `r_mn = y_mn − Σ_l x_ml x_nl`, so the numerator term is
//! `(r_mn + x̂_md x̂_nd) x̂_nd` and the cache is patched after each column.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::par;
use crate::rng::rng_for;
use crate::shdi::{Edge, ShdiMatrix};

/// Floor for the denominator of the reported constraint gap.
pub const GAP_FLOOR: f64 = 1e-12;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum TrainError {
    #[error("hyperparameter {name} must be finite and > 0, got {value}")]
    InvalidHyperParam { name: &'static str, value: f64 },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("state has {state} nodes but the matrix has {matrix}")]
    NodeCountMismatch { state: usize, matrix: usize },
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("pair ({m}, {n}) appears in both the training and the validation set")]
    OverlappingSplits { m: usize, n: usize },
    #[error("node index {index} out of range for {node_count} nodes")]
    IndexOutOfRange { index: usize, node_count: usize },
    #[error("non-positive denominator {value} in x-update at row {row}, column {column}")]
    NonPositiveDenominator {
        row: usize,
        column: usize,
        value: f64,
    },
    #[error(
        "non-finite value after sweep {iteration}; the run diverged \
         (try a smaller eta or a larger mu)"
    )]
    Diverged { iteration: usize },
}

/// `s = {λ, γ, μ, η}`, all strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// L2 regularization coefficient.
    pub lambda: f64,
    /// Augmentation scale in `α_u = γ·|Λ(u)|`.
    pub gamma: f64,
    /// Proximal coefficient.
    pub mu: f64,
    /// Dual step rescale.
    pub eta: f64,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            lambda: 0.001,
            gamma: 0.1,
            mu: 2.0,
            eta: 1.0,
        }
    }
}

impl HyperParams {
    pub fn new(lambda: f64, gamma: f64, mu: f64, eta: f64) -> Result<Self, TrainError> {
        let hp = Self {
            lambda,
            gamma,
            mu,
            eta,
        };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        for (name, value) in [
            ("lambda", self.lambda),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("eta", self.eta),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(TrainError::InvalidHyperParam { name, value });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Latent factor dimension `f`.
    pub rank: usize,
    pub max_iters: usize,
    /// Stop once consecutive validation RMSEs differ by less than this.
    pub tol: f64,
    pub seed: u64,
    /// Initial `X` is uniform on `(0, init_scale]`.
    pub init_scale: f64,
    /// Drop the proximal term (forces `μ = 0` in the learning rules).
    pub ablate_proximal: bool,
    /// Recompute the residual cache from scratch every this many sweeps.
    pub refresh_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            rank: 20,
            max_iters: 1000,
            tol: 1e-5,
            seed: 0,
            init_scale: 0.05,
            ablate_proximal: false,
            refresh_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.rank == 0 {
            return Err(TrainError::InvalidConfig("rank must be at least 1"));
        }
        if self.max_iters == 0 {
            return Err(TrainError::InvalidConfig("max_iters must be at least 1"));
        }
        // tol = 0 disables the RMSE-delta rule; tol = ∞ stops after one sweep.
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(TrainError::InvalidConfig("tol must be >= 0"));
        }
        if !(self.init_scale.is_finite() && self.init_scale > 0.0) {
            return Err(TrainError::InvalidConfig(
                "init_scale must be finite and > 0",
            ));
        }
        if self.refresh_every == 0 {
            return Err(TrainError::InvalidConfig(
                "refresh_every must be at least 1",
            ));
        }
        Ok(())
    }

    /// `μ` as used by the learning rules.
    pub fn effective_mu(&self, hp: &HyperParams) -> f64 {
        if self.ablate_proximal {
            0.0
        } else {
            hp.mu
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxIters,
    Tol,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub iterations_run: usize,
    /// Validation RMSE (computed with `A`) after each sweep.
    pub rmse_history: Vec<f64>,
    /// Validation RMSE of the starting state.
    pub initial_rmse: f64,
    pub stop_reason: StopReason,
    /// `‖X − A‖_F / max(‖X‖_F, 1e-12)`.
    pub final_gap: f64,
    /// Seconds; zero without the `std` feature.
    pub wall_time: f64,
}

impl TrainReport {
    pub fn final_rmse(&self) -> f64 {
        self.rmse_history
            .last()
            .copied()
            .unwrap_or(self.initial_rmse)
    }
}

/// `X`, `A` and `W` (row-major `|U| × f`) plus the residual cache of the
/// matrix the state is being trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorState {
    node_count: usize,
    rank: usize,
    x: Vec<f64>,
    a: Vec<f64>,
    w: Vec<f64>,
    residual: Vec<f64>,
}

impl FactorState {
    /// `X` uniform on `(0, init_scale]`, `A = X`, `W = 0`.
    pub fn init(mat: &ShdiMatrix, cfg: &TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let len = mat.node_count() * cfg.rank;
        let mut rng = rng_for(cfg.seed, 1);
        // gen() is in [0, 1); flip it so zero is excluded and the scale included.
        let x: Vec<f64> = (0..len)
            .map(|_| cfg.init_scale * (1.0 - rng.gen::<f64>()))
            .collect();
        let mut state = Self {
            node_count: mat.node_count(),
            rank: cfg.rank,
            a: x.clone(),
            x,
            w: vec![0.0; len],
            residual: Vec::new(),
        };
        state.refresh_residuals(mat);
        Ok(state)
    }

    /// Assembles a state from stored matrices. `x` and `w` default to `A` and
    /// zero. The residual cache is empty until [`refresh_residuals`] runs.
    ///
    /// [`refresh_residuals`]: FactorState::refresh_residuals
    pub fn from_parts(
        node_count: usize,
        rank: usize,
        a: Vec<f64>,
        x: Option<Vec<f64>>,
        w: Option<Vec<f64>>,
    ) -> Result<Self, TrainError> {
        let len = node_count * rank;
        if rank == 0 {
            return Err(TrainError::InvalidConfig("rank must be at least 1"));
        }
        let x = x.unwrap_or_else(|| a.clone());
        let w = w.unwrap_or_else(|| vec![0.0; len]);
        if a.len() != len || x.len() != len || w.len() != len {
            return Err(TrainError::InvalidConfig(
                "factor matrices do not match node_count × rank",
            ));
        }
        Ok(Self {
            node_count,
            rank,
            x,
            a,
            w,
            residual: Vec::new(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn x_mut(&mut self) -> &mut [f64] {
        &mut self.x
    }

    pub fn a_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn a_row(&self, m: usize) -> &[f64] {
        &self.a[m * self.rank..(m + 1) * self.rank]
    }

    pub fn x_row(&self, m: usize) -> &[f64] {
        &self.x[m * self.rank..(m + 1) * self.rank]
    }

    /// Cached `r_mn = y_mn − Σ_l x_ml x_nl`, indexed like the training edges.
    pub fn residuals(&self) -> &[f64] {
        &self.residual
    }

    /// Residuals recomputed from `X` without touching the cache.
    pub fn fresh_residuals(&self, mat: &ShdiMatrix) -> Vec<f64> {
        mat.edges()
            .iter()
            .map(|e| e.y - dot(self.x_row(e.m), self.x_row(e.n)))
            .collect()
    }

    pub fn refresh_residuals(&mut self, mat: &ShdiMatrix) {
        self.residual = self.fresh_residuals(mat);
    }

    fn check_shape(&self, mat: &ShdiMatrix) -> Result<(), TrainError> {
        if self.node_count != mat.node_count() {
            return Err(TrainError::NodeCountMismatch {
                state: self.node_count,
                matrix: mat.node_count(),
            });
        }
        Ok(())
    }

    fn is_finite(&self) -> bool {
        self.x
            .iter()
            .chain(&self.a)
            .chain(&self.w)
            .all(|v| v.is_finite())
    }

    /// `‖X − A‖_F / max(‖X‖_F, 1e-12)`.
    pub fn constraint_gap(&self) -> f64 {
        let diff: f64 = self
            .x
            .iter()
            .zip(&self.a)
            .map(|(x, a)| (x - a) * (x - a))
            .sum();
        let norm: f64 = self.x.iter().map(|x| x * x).sum();
        libm::sqrt(diff) / libm::sqrt(norm).max(GAP_FLOOR)
    }

    #[inline]
    pub(crate) fn predict_unchecked(&self, m: usize, n: usize) -> f64 {
        dot(self.a_row(m), self.a_row(n))
    }
}

#[inline]
fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(p, q)| p * q).sum()
}

/// See [`FactorState::init`].
pub fn init_state(mat: &ShdiMatrix, cfg: &TrainConfig) -> Result<FactorState, TrainError> {
    FactorState::init(mat, cfg)
}

/// `α_u = γ·max(1, degree)`; the guard keeps `w/α` defined for nodes with
/// no known entries.
#[inline]
pub fn alpha(hp: &HyperParams, degree: usize) -> f64 {
    hp.gamma * degree.max(1) as f64
}

fn column(values: &[f64], rank: usize, d: usize) -> Vec<f64> {
    values.iter().skip(d).step_by(rank).copied().collect()
}

/// Job one for column `d`: every `x_{m,d}` minimizes its row-restricted
/// quadratic given the pre-update snapshot of the column. The residual
/// cache is patched for the change.
pub fn update_column_x(
    state: &mut FactorState,
    mat: &ShdiMatrix,
    hp: &HyperParams,
    cfg: &TrainConfig,
    d: usize,
) -> Result<(), TrainError> {
    state.check_shape(mat)?;
    debug_assert_eq!(state.residual.len(), mat.edge_count());
    let f = state.rank;
    let lambda = hp.lambda;
    let mu = cfg.effective_mu(hp);
    let snapshot = column(&state.x, f, d);
    let updated: Vec<Result<f64, TrainError>> = {
        let st = &*state;
        let snap = &snapshot;
        par::map_indices(st.node_count, move |m| {
            let row = mat.row(m);
            let alpha_m = alpha(hp, row.len());
            let xm = snap[m];
            let mut num = 0.0;
            let mut den = 0.0;
            for nb in row {
                let xn = snap[nb.node];
                num += (st.residual[nb.edge] + xm * xn) * xn;
                den += xn * xn + lambda;
            }
            num += alpha_m * st.a[m * f + d] - st.w[m * f + d] + mu * xm;
            den += alpha_m + mu;
            if den > 0.0 {
                Ok(num / den)
            } else {
                Err(TrainError::NonPositiveDenominator {
                    row: m,
                    column: d,
                    value: den,
                })
            }
        })
    };
    let mut fresh = Vec::with_capacity(updated.len());
    for v in updated {
        fresh.push(v?);
    }
    for (m, v) in fresh.iter().enumerate() {
        state.x[m * f + d] = *v;
    }
    let edges = mat.edges();
    par::for_each_mut(&mut state.residual, |i, r| {
        let Edge { m, n, .. } = edges[i];
        *r += snapshot[m] * snapshot[n] - fresh[m] * fresh[n];
    });
    Ok(())
}

/// Job two for column `d`: nonnegative truncation `a = max(0, x + w/α)`.
pub fn update_column_a(state: &mut FactorState, mat: &ShdiMatrix, hp: &HyperParams, d: usize) {
    let f = state.rank;
    for m in 0..state.node_count {
        let i = m * f + d;
        let alpha_m = alpha(hp, mat.degree(m));
        state.a[i] = (state.x[i] + state.w[i] / alpha_m).max(0.0);
    }
}

/// Job three for column `d`: dual ascent `w += η α (x − a)`.
pub fn update_column_w(state: &mut FactorState, mat: &ShdiMatrix, hp: &HyperParams, d: usize) {
    let f = state.rank;
    for m in 0..state.node_count {
        let i = m * f + d;
        let alpha_m = alpha(hp, mat.degree(m));
        state.w[i] += hp.eta * alpha_m * (state.x[i] - state.a[i]);
    }
}

/// One pass over columns `0..f`, running the x, a and w jobs per column.
pub fn sweep(
    state: &mut FactorState,
    mat: &ShdiMatrix,
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    for d in 0..state.rank {
        update_column_x(state, mat, hp, cfg, d)?;
        update_column_a(state, mat, hp, d);
        update_column_w(state, mat, hp, d);
    }
    Ok(())
}

/// `ŷ_{m,n} = Σ_d a_{m,d} a_{n,d}`.
pub fn predict(state: &FactorState, m: usize, n: usize) -> Result<f64, TrainError> {
    for index in [m, n] {
        if index >= state.node_count {
            return Err(TrainError::IndexOutOfRange {
                index,
                node_count: state.node_count,
            });
        }
    }
    Ok(state.predict_unchecked(m, n))
}

/// The proximal augmented Lagrangian
///
/// ```text
/// ε = ½ Σ_m Σ_{n∈Λ(m)} [ (y_mn − x_m·x_n)² + λ(‖x_m‖² + ‖x_n‖²) ]
///   + Σ_{u,d} w_ud (x_ud − a_ud) + Σ_u (α_u/2) Σ_d (x_ud − a_ud)²
///   + (μ/2) Σ_{u,d} (x_ud − anchor_ud)²
/// ```
///
/// The loss sum visits both ordered mentions of an off-diagonal edge and a
/// self-loop once, matching how `Λ(m)` is traversed by the updates.
pub fn evaluate_objective(
    state: &FactorState,
    mat: &ShdiMatrix,
    hp: &HyperParams,
    anchor: &[f64],
) -> f64 {
    assert_eq!(anchor.len(), state.x.len(), "anchor must match X");
    let mut loss = 0.0;
    for e in mat.edges() {
        let xm = state.x_row(e.m);
        let xn = state.x_row(e.n);
        let r = e.y - dot(xm, xn);
        let term = r * r + hp.lambda * (dot(xm, xm) + dot(xn, xn));
        let mentions = if e.is_self_loop() { 1.0 } else { 2.0 };
        loss += 0.5 * mentions * term;
    }
    let f = state.rank;
    let mut coupling = 0.0;
    let mut proximal = 0.0;
    for u in 0..state.node_count {
        let alpha_u = alpha(hp, mat.degree(u));
        for d in 0..f {
            let i = u * f + d;
            let gap = state.x[i] - state.a[i];
            coupling += state.w[i] * gap + 0.5 * alpha_u * gap * gap;
            let step = state.x[i] - anchor[i];
            proximal += step * step;
        }
    }
    loss + coupling + 0.5 * hp.mu * proximal
}

pub(crate) fn rmse_unchecked(state: &FactorState, edges: &[Edge]) -> f64 {
    let sse: f64 = edges
        .iter()
        .map(|e| {
            let r = e.y - state.predict_unchecked(e.m, e.n);
            r * r
        })
        .sum();
    libm::sqrt(sse / edges.len() as f64)
}

fn check_disjoint(train: &ShdiMatrix, valid: &ShdiMatrix) -> Result<(), TrainError> {
    let (mut i, mut j) = (0, 0);
    let (a, b) = (train.edges(), valid.edges());
    while i < a.len() && j < b.len() {
        match (a[i].m, a[i].n).cmp(&(b[j].m, b[j].n)) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                return Err(TrainError::OverlappingSplits {
                    m: a[i].m,
                    n: a[i].n,
                })
            }
        }
    }
    Ok(())
}

/// Fresh state from `cfg.seed`, then [`train_from`].
pub fn train(
    train_mat: &ShdiMatrix,
    valid: &ShdiMatrix,
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<(FactorState, TrainReport), TrainError> {
    hp.validate()?;
    let state = FactorState::init(train_mat, cfg)?;
    train_from(state, train_mat, valid, hp, cfg)
}

/// Runs sweeps until the validation RMSE moves by less than `cfg.tol`
/// between consecutive iterations or `cfg.max_iters` sweeps have run.
pub fn train_from(
    mut state: FactorState,
    train_mat: &ShdiMatrix,
    valid: &ShdiMatrix,
    hp: &HyperParams,
    cfg: &TrainConfig,
) -> Result<(FactorState, TrainReport), TrainError> {
    hp.validate()?;
    cfg.validate()?;
    state.check_shape(train_mat)?;
    state.check_shape(valid)?;
    if state.rank != cfg.rank {
        return Err(TrainError::InvalidConfig(
            "state rank differs from cfg.rank",
        ));
    }
    if valid.edge_count() == 0 {
        return Err(TrainError::EmptyValidation);
    }
    check_disjoint(train_mat, valid)?;

    #[cfg(feature = "std")]
    let started = std::time::Instant::now();

    state.refresh_residuals(train_mat);
    let initial_rmse = rmse_unchecked(&state, valid.edges());
    let mut previous = initial_rmse;
    let mut history = Vec::new();
    let mut stop_reason = StopReason::MaxIters;
    for k in 1..=cfg.max_iters {
        sweep(&mut state, train_mat, hp, cfg)?;
        if k % cfg.refresh_every == 0 {
            state.refresh_residuals(train_mat);
        }
        let current = rmse_unchecked(&state, valid.edges());
        if !current.is_finite() || !state.is_finite() {
            return Err(TrainError::Diverged { iteration: k });
        }
        history.push(current);
        if (current - previous).abs() < cfg.tol {
            stop_reason = StopReason::Tol;
            break;
        }
        previous = current;
    }

    #[cfg(feature = "std")]
    let wall_time = started.elapsed().as_secs_f64();
    #[cfg(not(feature = "std"))]
    let wall_time = 0.0;

    let report = TrainReport {
        iterations_run: history.len(),
        rmse_history: history,
        initial_rmse,
        stop_reason,
        final_gap: state.constraint_gap(),
        wall_time,
    };
    Ok((state, report))
}
