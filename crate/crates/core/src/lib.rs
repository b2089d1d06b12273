//! Sharp bounds on a target-population average treatment effect when the
//! conditional outcome distribution may shift between a randomized trial and
//! the target population.
//!
//! The shift is constrained by a likelihood-ratio bound `Λ ≥ 1`: for every
//! arm and covariate profile, the target outcome density is within a factor
//! `Λ` of the trial outcome density. `Λ = 1` is ordinary transportability and
//! collapses the bounds onto the inverse-odds weighted point estimate.
//!
//! The crate is `no_std` (it needs `alloc`). IO, file formats and the
//! experiment harness live in `transport-bounds-cli`.
//!
//! Module map:
//! - [`types`]: trial and target samples, per-arm reweighted outcome
//!   distributions, intervals and multipliers.
//! - [`bounds`]: the greedy sharp-bound solver, an independent threshold
//!   enumeration oracle, the quantile-integral representation, ATE bounds,
//!   envelopes over `Λ` and worst-case bounds.
//! - [`weights`]: logistic membership model (IRLS) and inverse-odds weights.
//! - [`dgp`]: simulation data-generating processes with ground truth.
//! - [`baselines`]: naive transported estimate and percentile bootstrap.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN fails validation too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod bounds;
pub mod dgp;
mod error;
mod linalg;
pub mod rng;
pub mod special;
pub mod types;
pub mod weights;

pub use bounds::{
    ate_bounds, extract_multipliers, greedy_arm_bound, oracle_arm_bound,
    quantile_functional_bound, sensitivity_envelope, worst_case_bounds, Direction, Envelope,
    OutcomeSupport, WorstCaseBounds,
};
pub use error::{Error, Result};
pub use types::{
    build_arm_distribution, Arm, ArmDistribution, BoundInterval, Multipliers, SensitivityParam,
    TargetCovariates, TrialDataset, TrialUnit,
};
