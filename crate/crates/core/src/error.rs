use thiserror::Error;

use crate::types::Arm;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty-arm: arm {0} has no trial units")]
    EmptyArm(Arm),
    #[error("invalid-weight: weight {value} at index {index} must be strictly positive and finite")]
    InvalidWeight { index: usize, value: f64 },
    #[error("weight vector has length {got}, expected {expected}")]
    WeightLength { expected: usize, got: usize },
    #[error("lambda must be >= 1 (got {0})")]
    InvalidLambda(f64),
    #[error("treatment must be -1 or +1 (got {0})")]
    InvalidArm(i64),
    #[error("non-finite value {value} in row {row}")]
    NonFinite { row: usize, value: f64 },
    #[error("row {row} has {got} covariates, expected {expected}")]
    Dimension { row: usize, expected: usize, got: usize },
    #[error("randomization probability must lie in (0, 1) (got {0})")]
    InvalidRandomization(f64),
    #[error("sample is empty")]
    EmptySample,
    #[error("grid-not-ascending: lambda grid must be strictly ascending and start at >= 1")]
    GridNotAscending,
    #[error("envelope intervals are not nested at lambda = {0}")]
    NotNested(f64),
    #[error("no-feasible-threshold: oracle found no feasible threshold placement")]
    NoFeasibleThreshold,
    #[error("separation: |coefficient| reached {0}, the membership model is quasi-separated")]
    Separation(f64),
    #[error("singular-hessian: normal equations could not be factorized")]
    SingularHessian,
    #[error("feature index {0} is outside 1..=p")]
    InvalidFeature(usize),
    #[error("rejection-stall: truncated normal sampling exceeded {0} attempts")]
    RejectionStall(u64),
    #[error("unsupported-kind: {0}")]
    UnsupportedKind(&'static str),
    #[error("degenerate-resample: {0} consecutive bootstrap resamples emptied an arm")]
    DegenerateResample(usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(&'static str),
}
