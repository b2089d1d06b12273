//! Comparator procedures: the transported point estimate (which assumes
//! `Λ = 1`) and a percentile bootstrap interval around it.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::{stream_rng, BOOTSTRAP_STREAM};
use crate::special::{compensated_sum, sorted_quantile};
use crate::types::{check_weights, Arm, TargetCovariates, TrialDataset, TrialUnit};
use crate::weights::{fit_membership, inverse_odds_weights, FitConfig};

/// Redraws allowed when a resample leaves an arm empty.
pub const MAX_RESAMPLE_RETRIES: usize = 100;

/// Hájek estimate `μ̂₊ - μ̂₋`, each arm's weighted mean normalized within the
/// arm.
pub fn naive_point_estimate(dataset: &TrialDataset, raw_weights: &[f64]) -> Result<f64> {
    check_weights(dataset, raw_weights)?;
    let pairs = dataset.units().iter().zip(raw_weights.iter().copied());
    hajek_difference(pairs).ok_or(Error::EmptyArm(Arm::Treated))
}

fn hajek_difference<'a>(pairs: impl Iterator<Item = (&'a TrialUnit, f64)> + Clone) -> Option<f64> {
    let arm_mean = |arm: Arm| {
        let in_arm = pairs.clone().filter(move |(u, _)| u.a == arm);
        let den = compensated_sum(in_arm.clone().map(|(_, w)| w));
        let num = compensated_sum(in_arm.map(|(u, w)| w * u.y));
        (den > 0.0).then(|| num / den)
    };
    Some(arm_mean(Arm::Treated)? - arm_mean(Arm::Control)?)
}

/// How resampled units obtain weights.
#[derive(Debug, Clone, Copy)]
pub enum BootstrapWeights<'a> {
    /// Weights aligned with the trial units travel with them. This covers
    /// oracle weights and a membership model fitted once on the full data.
    Fixed(&'a [f64]),
    /// Trial and target covariates are both resampled and the membership
    /// model is refit on every resample.
    Refit { target: &'a TargetCovariates, config: &'a FitConfig },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PercentileInterval {
    pub lower: f64,
    pub upper: f64,
}

impl PercentileInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// Nonparametric percentile bootstrap interval for the naive estimate.
///
/// Draws `replicates` resamples of the trial units with replacement and
/// returns the `(1 - level)/2` and `(1 + level)/2` quantiles of the
/// resampled estimates. A resample that empties an arm is redrawn.
pub fn bootstrap_ci(
    dataset: &TrialDataset,
    weights: BootstrapWeights<'_>,
    replicates: usize,
    level: f64,
    seed: u64,
) -> Result<PercentileInterval> {
    if replicates < 50 {
        return Err(Error::InvalidParameter("bootstrap needs at least 50 resamples"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter("level must lie in (0, 1)"));
    }
    if let BootstrapWeights::Fixed(w) = weights {
        check_weights(dataset, w)?;
    }
    let units = dataset.units();
    let n = units.len();
    let mut rng = stream_rng(seed, BOOTSTRAP_STREAM);
    let mut estimates = Vec::with_capacity(replicates);
    let mut idx = alloc::vec![0usize; n];

    for _ in 0..replicates {
        let mut retries = 0;
        let estimate = loop {
            for i in idx.iter_mut() {
                *i = rng.random_range(0..n);
            }
            let first = units[idx[0]].a;
            if idx.iter().any(|&i| units[i].a != first) {
                break match weights {
                    BootstrapWeights::Fixed(w) => hajek_difference(idx.iter().map(|&i| (&units[i], w[i]))),
                    BootstrapWeights::Refit { target, config } => {
                        let rows = target.rows();
                        let target_idx: Vec<usize> =
                            (0..rows.len()).map(|_| rng.random_range(0..rows.len())).collect();
                        let trial_x: Vec<&[f64]> = idx.iter().map(|&i| units[i].x.as_slice()).collect();
                        let target_x: Vec<&[f64]> =
                            target_idx.iter().map(|&j| rows[j].as_slice()).collect();
                        let model = fit_membership(&trial_x, &target_x, config)?;
                        let w = inverse_odds_weights(&model, &trial_x).weights;
                        hajek_difference(idx.iter().zip(w).map(|(&i, w)| (&units[i], w)))
                    }
                }
                .expect("both arms present");
            }
            retries += 1;
            if retries > MAX_RESAMPLE_RETRIES {
                return Err(Error::DegenerateResample(retries));
            }
        };
        estimates.push(estimate);
    }

    estimates.sort_by(f64::total_cmp);
    let tail = 0.5 * (1.0 - level);
    Ok(PercentileInterval {
        lower: sorted_quantile(&estimates, tail),
        upper: sorted_quantile(&estimates, 1.0 - tail),
    })
}
