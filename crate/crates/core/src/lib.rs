//! Random Forest permutation-importance confidence intervals on complete and
//! incomplete data.
//!
//! The pipeline: generate or load data ([`dataset`], [`simgen`]), inject
//! missingness ([`missingness`]), impute ([`imputation`]), fit forests
//! ([`forest`]), compute out-of-bag permutation importances with delete-d
//! jackknife intervals ([`importance`]), pool multiple imputations
//! ([`pooling`]) and evaluate coverage ([`harness`]).
//!
//! Work fans out over rayon when the `parallel` feature is on (default).
//! Every random draw comes from a [`rng::Stream`] derived from the master seed,
//! so results are bit-identical for any thread count.

pub mod config;
pub mod dataset;
pub mod error;
pub mod exec;
pub mod forest;
pub mod harness;
pub mod importance;
pub mod imputation;
pub mod missingness;
pub mod pooling;
pub mod rng;
pub mod simgen;
pub mod stats;

pub use dataset::{load_csv, CompleteDataset, IncompleteDataset, Matrix};
pub use error::{Error, Result};
pub use forest::{fit_forest, Forest, ForestConfig, Tree};
pub use harness::{ExperimentConfig, Method};
pub use importance::{estimate_importance, ishwaran_ci, rfpim, ImportanceEstimate};
pub use imputation::{impute, ImputationMethod, ImputationSet, ImputerConfig};
pub use pooling::{pool, rubin_ci, PooledEstimate};
pub use rng::Stream;
pub use simgen::{generate, GeneratorId, GroundTruth};
