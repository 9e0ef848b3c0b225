//! Neighborhood-based label imputation for partially labeled cohorts.
//!
//! A record is called positive when the share of positive labels among its
//! labeled neighbors within radius `S` is improbably high under the cohort
//! base rate (binomial upper tail below `T`).

pub mod baseline;
pub mod bits;
pub mod cohort;
pub mod distance;
pub mod error;
pub mod exec;
pub mod explain;
pub mod fill;
pub mod format;
pub mod stats;
pub mod synth;
pub mod tune;

pub use bits::BitVector;
pub use cohort::{load_cohort, read_cohort, save_cohort, write_cohort, Cohort, FeatureSchema, Label, Record};
pub use distance::{distance_matrix, DistanceMatrix, Metric};
pub use error::{Error, Result};
pub use exec::Execution;
pub use fill::{classify, impute_unknowns, ClassificationResult, Decision, FillModel, Hyperparameters};
pub use tune::{grid_search, loo_evaluate, Criterion, GridCell, GridSearchReport, LooMetrics};
