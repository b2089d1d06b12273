//! Domain types shared by every module.

use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::special::compensated_sum;

/// Treatment arm, coded `+1` (treated) and `-1` (control).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Treated, Arm::Control];

    pub fn from_code(code: i64) -> Result<Self> {
        match code {
            1 => Ok(Arm::Treated),
            -1 => Ok(Arm::Control),
            other => Err(Error::InvalidArm(other)),
        }
    }

    pub fn code(self) -> i64 {
        match self {
            Arm::Treated => 1,
            Arm::Control => -1,
        }
    }

    /// `+1.0` or `-1.0`, for use inside outcome equations.
    pub fn sign(self) -> f64 {
        self.code() as f64
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:+}", self.code())
    }
}

/// One trial participant: covariates, assigned arm and observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialUnit {
    pub x: Vec<f64>,
    pub a: Arm,
    pub y: f64,
}

/// Randomized trial sample with a known, covariate-independent
/// randomization probability `P(A = +1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialDataset {
    units: Vec<TrialUnit>,
    p: usize,
    pi_r: f64,
}

impl TrialDataset {
    pub fn new(units: Vec<TrialUnit>, pi_r: f64) -> Result<Self> {
        if !(pi_r > 0.0 && pi_r < 1.0) {
            return Err(Error::InvalidRandomization(pi_r));
        }
        let p = units.first().map(|u| u.x.len()).ok_or(Error::EmptySample)?;
        for (row, unit) in units.iter().enumerate() {
            if unit.x.len() != p {
                return Err(Error::Dimension { row, expected: p, got: unit.x.len() });
            }
            if !unit.y.is_finite() {
                return Err(Error::NonFinite { row, value: unit.y });
            }
            if let Some(&bad) = unit.x.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, value: bad });
            }
        }
        for arm in Arm::BOTH {
            if !units.iter().any(|u| u.a == arm) {
                return Err(Error::EmptyArm(arm));
            }
        }
        Ok(Self { units, p, pi_r })
    }

    pub fn units(&self) -> &[TrialUnit] {
        &self.units
    }

    pub fn len(&self) -> usize {
        self.units.len()
    }

    pub fn is_empty(&self) -> bool {
        self.units.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn pi_r(&self) -> f64 {
        self.pi_r
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.units.iter().filter(|u| u.a == arm).count()
    }

    /// Covariate rows in dataset order.
    pub fn covariates(&self) -> impl Iterator<Item = &[f64]> {
        self.units.iter().map(|u| u.x.as_slice())
    }
}

/// Covariate-only sample from the target population.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetCovariates {
    xs: Vec<Vec<f64>>,
}

impl TargetCovariates {
    pub fn new(xs: Vec<Vec<f64>>) -> Result<Self> {
        let p = xs.first().map(Vec::len).ok_or(Error::EmptySample)?;
        for (row, x) in xs.iter().enumerate() {
            if x.len() != p {
                return Err(Error::Dimension { row, expected: p, got: x.len() });
            }
            if let Some(&bad) = x.iter().find(|v| !v.is_finite()) {
                return Err(Error::NonFinite { row, value: bad });
            }
        }
        Ok(Self { xs })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.xs
    }

    pub fn n_o(&self) -> usize {
        self.xs.len()
    }

    pub fn p(&self) -> usize {
        self.xs[0].len()
    }
}

/// Outcome-shift sensitivity parameter `Λ ≥ 1`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SensitivityParam(f64);

impl SensitivityParam {
    pub fn new(lambda: f64) -> Result<Self> {
        // NaN fails this comparison too.
        if lambda >= 1.0 && lambda.is_finite() {
            Ok(Self(lambda))
        } else {
            Err(Error::InvalidLambda(lambda))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn inverse(self) -> f64 {
        1.0 / self.0
    }
}

impl TryFrom<f64> for SensitivityParam {
    type Error = Error;

    fn try_from(lambda: f64) -> Result<Self> {
        Self::new(lambda)
    }
}

/// Outcomes of one arm sorted ascending, paired with normalized
/// inverse-odds weights: the reweighted empirical outcome measure of the arm.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmDistribution {
    outcomes: Vec<f64>,
    probs: Vec<f64>,
    arm: Arm,
}

impl ArmDistribution {
    /// Builds a distribution from `(outcome, raw weight)` pairs. Pairs are
    /// stably sorted by outcome and weights normalized to sum to one.
    pub fn from_weighted(arm: Arm, pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        if pairs.is_empty() {
            return Err(Error::EmptyArm(arm));
        }
        for (index, &(y, w)) in pairs.iter().enumerate() {
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::InvalidWeight { index, value: w });
            }
            if !y.is_finite() {
                return Err(Error::NonFinite { row: index, value: y });
            }
        }
        // Stable: ties keep their input order.
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total = compensated_sum(pairs.iter().map(|&(_, w)| w));
        let (outcomes, probs) = pairs.into_iter().map(|(y, w)| (y, w / total)).unzip();
        Ok(Self { outcomes, probs, arm })
    }

    pub fn outcomes(&self) -> &[f64] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn arm(&self) -> Arm {
        self.arm
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    /// Weighted mean `Σ p_j y_j`.
    pub fn mean(&self) -> f64 {
        compensated_sum(self.outcomes.iter().zip(&self.probs).map(|(y, p)| y * p))
    }
}

/// Normalized, outcome-sorted weights of one arm.
///
/// `raw_weights` is aligned with `dataset.units()`; only the entries of units
/// in `arm` are read, but every entry must be positive and finite.
pub fn build_arm_distribution(
    dataset: &TrialDataset,
    raw_weights: &[f64],
    arm: Arm,
) -> Result<ArmDistribution> {
    check_weights(dataset, raw_weights)?;
    ArmDistribution::from_weighted(
        arm,
        dataset
            .units()
            .iter()
            .zip(raw_weights)
            .filter(|(u, _)| u.a == arm)
            .map(|(u, &w)| (u.y, w)),
    )
}

pub(crate) fn check_weights(dataset: &TrialDataset, raw_weights: &[f64]) -> Result<()> {
    if raw_weights.len() != dataset.len() {
        return Err(Error::WeightLength { expected: dataset.len(), got: raw_weights.len() });
    }
    match raw_weights.iter().position(|&w| !(w > 0.0 && w.is_finite())) {
        Some(index) => Err(Error::InvalidWeight { index, value: raw_weights[index] }),
        None => Ok(()),
    }
}

/// Closed interval of bound values at one `Λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInterval {
    pub lower: f64,
    pub upper: f64,
    pub lambda: f64,
}

impl BoundInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    /// `true` when `self` lies inside `other` up to `tol`.
    pub fn is_within(&self, other: &BoundInterval, tol: f64) -> bool {
        other.lower <= self.lower + tol && self.upper <= other.upper + tol
    }
}

/// Likelihood-ratio multipliers `λ_j` aligned with a sorted arm.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    pub values: Vec<f64>,
    pub lambda: f64,
}

impl Multipliers {
    /// Number of values strictly between `1/Λ` and `Λ`.
    pub fn interior_count(&self) -> usize {
        let lo = 1.0 / self.lambda;
        self.values.iter().filter(|&&v| v > lo && v < self.lambda).count()
    }

    /// `Σ p_j λ_j`, which is one for a feasible tilt.
    pub fn total_mass(&self, probs: &[f64]) -> f64 {
        compensated_sum(self.values.iter().zip(probs).map(|(l, p)| l * p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn unit(a: i64, y: f64) -> TrialUnit {
        TrialUnit { x: vec![0.0], a: Arm::from_code(a).unwrap(), y }
    }

    #[test]
    fn uniform_weights_normalize_to_one_over_n() {
        let ds = TrialDataset::new(
            vec![unit(1, 3.0), unit(1, 1.0), unit(1, 2.0), unit(1, 1.0), unit(-1, 0.0)],
            0.5,
        )
        .unwrap();
        let d = build_arm_distribution(&ds, &[1.0; 5], Arm::Treated).unwrap();
        assert_eq!(d.outcomes(), &[1.0, 1.0, 2.0, 3.0]);
        assert_eq!(d.probs(), &[0.25; 4]);
    }

    #[test]
    fn weights_follow_the_sort_permutation() {
        let ds = TrialDataset::new(
            vec![unit(-1, 5.0), unit(-1, 4.0), unit(-1, 6.0), unit(1, 0.0)],
            0.5,
        )
        .unwrap();
        let d = build_arm_distribution(&ds, &[2.0, 1.0, 1.0, 9.0], Arm::Control).unwrap();
        assert_eq!(d.outcomes(), &[4.0, 5.0, 6.0]);
        // 2/4 belongs to outcome 5, which lands in the middle.
        assert_eq!(d.probs(), &[0.25, 0.5, 0.25]);
    }

    #[test]
    fn ties_keep_dataset_order() {
        let ds = TrialDataset::new(
            vec![unit(1, 1.0), unit(1, 1.0), unit(1, 1.0), unit(-1, 0.0)],
            0.5,
        )
        .unwrap();
        let d = build_arm_distribution(&ds, &[1.0, 2.0, 3.0, 1.0], Arm::Treated).unwrap();
        assert_eq!(d.probs(), &[1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0]);
    }

    #[test]
    fn zero_negative_and_nan_weights_are_rejected() {
        let ds = TrialDataset::new(vec![unit(1, 1.0), unit(-1, 2.0)], 0.5).unwrap();
        for bad in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            let err = build_arm_distribution(&ds, &[1.0, bad], Arm::Treated).unwrap_err();
            assert!(matches!(err, Error::InvalidWeight { index: 1, .. }), "{err:?}");
        }
    }

    #[test]
    fn dataset_requires_both_arms() {
        let err = TrialDataset::new(vec![unit(1, 1.0), unit(1, 2.0)], 0.5).unwrap_err();
        assert_eq!(err, Error::EmptyArm(Arm::Control));
        assert_eq!(
            ArmDistribution::from_weighted(Arm::Treated, []).unwrap_err(),
            Error::EmptyArm(Arm::Treated)
        );
    }

    #[test]
    fn dataset_validation() {
        assert!(matches!(Arm::from_code(0), Err(Error::InvalidArm(0))));
        assert!(TrialDataset::new(vec![unit(1, 1.0), unit(-1, 2.0)], 1.0).is_err());
        let ragged = vec![unit(1, 1.0), TrialUnit { x: vec![0.0, 1.0], a: Arm::Control, y: 0.0 }];
        assert!(matches!(TrialDataset::new(ragged, 0.5), Err(Error::Dimension { row: 1, .. })));
        assert!(matches!(
            TrialDataset::new(vec![unit(1, f64::NAN), unit(-1, 0.0)], 0.5),
            Err(Error::NonFinite { row: 0, .. })
        ));
    }

    #[test]
    fn sensitivity_param_rejects_below_one() {
        assert!(SensitivityParam::new(1.0).is_ok());
        assert_eq!(SensitivityParam::new(0.5), Err(Error::InvalidLambda(0.5)));
        assert!(SensitivityParam::new(f64::NAN).is_err());
    }
}
