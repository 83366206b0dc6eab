//! File formats and the command-line driver around [`psnl_core`].
//!
//! - [`edges`]: TSV edge lists and symmetric MatrixMarket files.
//! - [`folds`]: the fold assignment file written by `psnl split`.
//! - [`model`]: the text model file (`PSNL v1`).
//! - [`trial_log`]: the append-only TPE trial log.
//! - [`summary`]: cross-validation CSV and table output.
//! - [`cli`]: argument parsing, run manifests and command execution.

pub mod cli;
pub mod edges;
pub mod error;
pub mod folds;
pub mod model;
pub mod summary;
pub mod trial_log;

pub use error::{CliError, FormatError};
