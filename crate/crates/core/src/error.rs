use std::io;

use thiserror::Error;

use crate::tune::GridCell;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },

    #[error("duplicate record id {0:?}")]
    DuplicateId(String),

    #[error("schema mismatch: expected column {expected:?}, found {found:?}")]
    SchemaMismatch { expected: String, found: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("no measurements to aggregate")]
    EmptyMeasurements,

    #[error("measurement {0} outside [0, 100]")]
    OutOfRange(f64),

    #[error("cohort has no labeled records")]
    NoLabeledRecords,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("metric {metric} cannot be used with {continuous} continuous feature(s)")]
    IncompatibleMetric { metric: &'static str, continuous: usize },

    #[error("invalid arguments: {0}")]
    InvalidArguments(String),

    #[error("degenerate contingency table (all cells zero)")]
    DegenerateTable,

    #[error("each sample needs at least two observations")]
    InsufficientSample,

    #[error("both samples have zero variance")]
    ZeroVarianceBoth,

    #[error("unknown record {0:?}")]
    UnknownRecord(String),

    #[error("model was built from a different cohort")]
    ModelCohortMismatch,

    #[error("distance matrix does not cover the cohort")]
    DistanceCohortMismatch,

    #[error("leave-one-out needs at least two labeled records, found {0}")]
    TooFewLabeled(usize),

    #[error("hyperparameter grid is empty")]
    EmptyGrid,

    #[error("no grid cell satisfies the criterion ({} cells evaluated)", grid.len())]
    NoFeasibleCell { grid: Vec<GridCell> },

    #[error("record {0:?} has no labeled neighbors")]
    EmptyNeighborhood(String),

    #[error("record {0:?} has no labeled non-neighbors")]
    EmptyComplement(String),

    #[error("only one class present among labeled records")]
    SingleClass,

    #[error("logistic fit diverged at iteration {0}")]
    Diverged(usize),

    #[error("invalid synthetic cohort spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}
