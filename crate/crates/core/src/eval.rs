//! RMSE and the tenfold cross-validation protocol.
//!
//! Known entries are dealt into ten folds. Rotation `r` trains on seven
//! folds, stops on the validation fold `r`, and reports RMSE on the two test
//! folds `r+1, r+2 (mod 10)`. Hyperparameters are either fixed, tuned once
//! on rotation 0, or re-tuned inside every rotation.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::par;
use crate::rng::derive_seed;
use crate::shdi::{Edge, ShdiError, ShdiMatrix};
use crate::solver::{self, FactorState, HyperParams, TrainConfig, TrainError};
use crate::tpe::{run_search, SearchError, SearchSpace, TpeConfig};

/// Number of folds used by the protocol.
pub const FOLDS: usize = 10;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("cannot compute RMSE over an empty set of entries")]
    Empty,
    #[error("entry ({m}, {n}) is out of range for {node_count} nodes")]
    IndexOutOfRange {
        m: usize,
        n: usize,
        node_count: usize,
    },
    #[error(transparent)]
    Data(#[from] ShdiError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// `sqrt(Σ (y − ŷ)² / |Γ|)` with `ŷ` from [`solver::predict`].
pub fn rmse(truth: &[Edge], model: &FactorState) -> Result<f64, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let node_count = model.node_count();
    if let Some(e) = truth
        .iter()
        .find(|e| e.m >= node_count || e.n >= node_count)
    {
        return Err(EvalError::IndexOutOfRange {
            m: e.m,
            n: e.n,
            node_count,
        });
    }
    Ok(solver::rmse_unchecked(model, truth))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub rmse: f64,
    pub n_pairs: usize,
    /// Seconds spent in the full training run.
    pub wall_time_train: f64,
    /// Seconds spent tuning for this rotation.
    pub wall_time_tune: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationResult {
    pub rotation: usize,
    pub seed: u64,
    pub params: HyperParams,
    pub iterations: usize,
    pub eval: EvalResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub rotations: Vec<RotationResult>,
    pub mean_rmse: f64,
    /// Sample standard deviation (n − 1) of the rotation RMSEs.
    pub std_rmse: f64,
    pub seeds: Vec<u64>,
    /// Seconds spent tuning before the rotations, when tuning once.
    pub shared_tune_time: f64,
}

impl CvSummary {
    fn from_rotations(rotations: Vec<RotationResult>, shared_tune_time: f64) -> Self {
        let n = rotations.len() as f64;
        let mean = rotations.iter().map(|r| r.eval.rmse).sum::<f64>() / n;
        let var = if rotations.len() > 1 {
            rotations
                .iter()
                .map(|r| (r.eval.rmse - mean) * (r.eval.rmse - mean))
                .sum::<f64>()
                / (n - 1.0)
        } else {
            0.0
        };
        Self {
            seeds: rotations.iter().map(|r| r.seed).collect(),
            rotations,
            mean_rmse: mean,
            std_rmse: libm::sqrt(var),
            shared_tune_time,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tuning {
    /// Use `CvOptions::params` everywhere.
    Off,
    /// Tune on rotation 0's train/validation folds and reuse the result.
    Once,
    /// Tune separately inside each rotation.
    PerRotation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub tuning: Tuning,
    /// Hyperparameters when tuning is off.
    pub params: HyperParams,
    /// How many rotations to run, starting at 0 (at most [`FOLDS`]).
    pub rotations: usize,
}

impl Default for CvOptions {
    fn default() -> Self {
        Self {
            tuning: Tuning::Once,
            params: HyperParams::default(),
            rotations: FOLDS,
        }
    }
}

#[cfg(feature = "std")]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = std::time::Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64())
}

#[cfg(not(feature = "std"))]
fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    (f(), 0.0)
}

/// Runs the tenfold protocol. Rotation `r` initializes its factors from a
/// seed derived from `(seed, r)`; the fold shuffle uses `seed` itself.
pub fn cross_validate(
    mat: &ShdiMatrix,
    cfg: &TrainConfig,
    space: &SearchSpace,
    tpe_cfg: &TpeConfig,
    opts: &CvOptions,
    seed: u64,
) -> Result<CvSummary, EvalError> {
    let split = mat.kfold_split(FOLDS, seed)?;
    let n_rot = opts.rotations.clamp(1, FOLDS);
    let rotation_seed = |r: usize| derive_seed(seed, 1 + r as u64);
    let search_seed = |r: usize| derive_seed(seed, 1_000 + r as u64);

    let (shared, shared_tune_time) = match opts.tuning {
        Tuning::Once => {
            let rot = split.rotation(0)?;
            let (train_mat, valid) = (mat.subset(&rot.train), mat.subset(&rot.validation));
            let tune_cfg = TrainConfig {
                seed: rotation_seed(0),
                ..*cfg
            };
            let (outcome, t) = timed(|| {
                run_search(
                    &train_mat,
                    &valid,
                    space,
                    tpe_cfg,
                    &tune_cfg,
                    search_seed(0),
                )
            });
            (Some(outcome?.best), t)
        }
        _ => (None, 0.0),
    };

    let results: Vec<Result<RotationResult, EvalError>> = par::map_jobs(n_rot, |r| {
        let rot = split.rotation(r)?;
        let train_mat = mat.subset(&rot.train);
        let valid = mat.subset(&rot.validation);
        let test = mat.subset(&rot.test);
        let run_cfg = TrainConfig {
            seed: rotation_seed(r),
            ..*cfg
        };
        let (params, tune_time) = match (opts.tuning, shared) {
            (Tuning::Off, _) => (opts.params, 0.0),
            (Tuning::Once, Some(p)) => (p, if r == 0 { shared_tune_time } else { 0.0 }),
            _ => {
                let (outcome, t) = timed(|| {
                    run_search(&train_mat, &valid, space, tpe_cfg, &run_cfg, search_seed(r))
                });
                (outcome?.best, t)
            }
        };
        let (trained, train_time) = timed(|| solver::train(&train_mat, &valid, &params, &run_cfg));
        let (state, report) = trained?;
        let score = rmse(test.edges(), &state)?;
        Ok(RotationResult {
            rotation: r,
            seed: run_cfg.seed,
            params,
            iterations: report.iterations_run,
            eval: EvalResult {
                rmse: score,
                n_pairs: test.edge_count(),
                wall_time_train: train_time,
                wall_time_tune: tune_time,
            },
        })
    });
    let rotations = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(CvSummary::from_rotations(rotations, shared_tune_time))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_hand_arithmetic() {
        // A rows: node 0 → 0.3, node 1 → 1.0, node 2 → 0.6
        let state = FactorState::from_parts(3, 1, alloc::vec![0.3, 1.0, 0.6], None, None).unwrap();
        let truth = [Edge { m: 0, n: 1, y: 0.5 }, Edge { m: 1, n: 2, y: 0.2 }];
        let v = rmse(&truth, &state).unwrap();
        assert!((v - libm::sqrt(0.1)).abs() < 1e-15);
        assert!((v - 0.316228).abs() < 1e-6);
    }

    #[test]
    fn rmse_perfect_and_empty() {
        let state = FactorState::from_parts(2, 1, alloc::vec![0.5, 2.0], None, None).unwrap();
        assert_eq!(rmse(&[Edge { m: 0, n: 1, y: 1.0 }], &state), Ok(0.0));
        assert_eq!(rmse(&[], &state), Err(EvalError::Empty));
        assert!(matches!(
            rmse(&[Edge { m: 0, n: 2, y: 1.0 }], &state),
            Err(EvalError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn summary_statistics() {
        let mk = |rotation, rmse| RotationResult {
            rotation,
            seed: 0,
            params: HyperParams::default(),
            iterations: 1,
            eval: EvalResult {
                rmse,
                n_pairs: 1,
                wall_time_train: 0.0,
                wall_time_tune: 0.0,
            },
        };
        let s = CvSummary::from_rotations(alloc::vec![mk(0, 1.0), mk(1, 2.0), mk(2, 3.0)], 0.0);
        assert_eq!(s.mean_rmse, 2.0);
        assert_eq!(s.std_rmse, 1.0);
    }
}
