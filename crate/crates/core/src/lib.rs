//! Proximal symmetric nonnegative latent factor analysis (PSNL) for symmetric,
//! high-dimensional and incomplete matrices built from undirected weighted
//! networks.
//!
//! The crate is `no_std` + `alloc` when built without the default `std`
//! feature. The `parallel` feature enables row-parallel column updates and
//! concurrent cross-validation rotations through rayon; results do not depend
//! on the number of worker threads.
//!
//! Layout:
//!
//! - [`shdi`]: the sparse symmetric data model, adjacency, and fold splitting.
//! - [`solver`]: element-wise proximal ADMM learning of the latent factors.
//! - [`tpe`]: Tree-structured Parzen Estimator search over the four
//!   hyperparameters.
//! - [`eval`]: RMSE and the tenfold cross-validation protocol.
#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod eval;
mod par;
pub mod rng;
pub mod shdi;
pub mod solver;
pub mod tpe;

pub use eval::{
    cross_validate, rmse, CvOptions, CvSummary, EvalError, EvalResult, RotationResult, Tuning,
};
pub use shdi::{
    Edge, FoldSplit, IndexedEntry, LabelMap, LabeledEntry, Neighbor, Rotation, ShdiError,
    ShdiMatrix,
};
pub use solver::{
    alpha, evaluate_objective, init_state, predict, sweep, train, train_from, update_column_a,
    update_column_w, update_column_x, FactorState, HyperParams, StopReason, TrainConfig,
    TrainError, TrainReport,
};
pub use tpe::{
    parzen_density, run_search, run_search_with, suggest, ObservationSet, ParamSpec, Scale,
    SearchError, SearchOutcome, SearchSpace, TpeConfig, Trial, TrialStatus,
};
