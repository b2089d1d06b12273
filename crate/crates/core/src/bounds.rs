//! Sharp bounds on arm means and on the target ATE.
//!
//! Within one arm the sharp upper bound solves
//!
//! ```text
//! max Σ p_j λ_j y_j   s.t.  1/Λ ≤ λ_j ≤ Λ,  Σ p_j λ_j = 1
//! ```
//!
//! and the lower bound is the corresponding minimum. The feasible set is a box
//! cut by one hyperplane, so an optimum puts every multiplier at a bound
//! except at most one, and the saturated multipliers sit on the largest
//! (upper) or smallest (lower) outcomes. [`greedy_arm_bound`] fills that
//! structure directly in `O(n)` on sorted input.
//!
//! Two independent routes compute the same numbers and are kept for
//! verification: [`oracle_arm_bound`] enumerates every threshold placement,
//! and [`quantile_functional_bound`] evaluates the tail-quantile integral
//! `mean/Λ + (Λ - 1/Λ) ∫ Q(u) du` over the top (or bottom) `1/(Λ+1)` of mass.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::special::compensated_sum;
use crate::types::{
    build_arm_distribution, check_weights, Arm, ArmDistribution, BoundInterval, Multipliers,
    SensitivityParam, TrialDataset,
};

/// Remaining budget at or below this is treated as exhausted.
const BUDGET_EPS: f64 = 1e-15;

/// Above this many outcomes the objective is summed with compensation.
const COMPENSATED_SUM_MIN_LEN: usize = 100_000;

/// Feasibility slack for the interior coordinate in the enumeration oracle.
const ORACLE_FEASIBILITY_TOL: f64 = 1e-12;

/// Tolerance of the post-hoc nesting check on envelopes.
const NESTING_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Upper,
    Lower,
}

impl Direction {
    pub const BOTH: [Direction; 2] = [Direction::Upper, Direction::Lower];
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Upper => "upper",
            Direction::Lower => "lower",
        })
    }
}

/// Where the greedy fill stopped: a run of saturated coordinates plus at most
/// one partially filled coordinate.
struct Allocation {
    saturated: core::ops::Range<usize>,
    partial: Option<(usize, f64)>,
}

fn allocate(probs: &[f64], lambda: f64, direction: Direction) -> Allocation {
    let n = probs.len();
    let span = lambda - 1.0 / lambda;
    let mut budget = 1.0 - 1.0 / lambda;
    let mut filled = 0;
    let mut partial = None;
    while filled < n && budget > BUDGET_EPS {
        let j = match direction {
            Direction::Upper => n - 1 - filled,
            Direction::Lower => filled,
        };
        let capacity = probs[j] * span;
        if capacity <= budget {
            budget -= capacity;
            filled += 1;
        } else {
            partial = Some((j, budget));
            break;
        }
    }
    let saturated = match direction {
        Direction::Upper => n - filled..n,
        Direction::Lower => 0..filled,
    };
    Allocation { saturated, partial }
}

fn tilted_mass(alloc: &Allocation, j: usize, p: f64, lambda: f64) -> f64 {
    if alloc.saturated.contains(&j) {
        p * lambda
    } else {
        match alloc.partial {
            Some((k, extra)) if k == j => p / lambda + extra,
            _ => p / lambda,
        }
    }
}

fn objective(outcomes: &[f64], q: impl Iterator<Item = f64>) -> f64 {
    let terms = outcomes.iter().zip(q).map(|(y, q)| y * q);
    if outcomes.len() > COMPENSATED_SUM_MIN_LEN {
        compensated_sum(terms)
    } else {
        terms.sum()
    }
}

fn greedy_value(dist: &ArmDistribution, lambda: f64, direction: Direction) -> f64 {
    let probs = dist.probs();
    let alloc = allocate(probs, lambda, direction);
    objective(
        dist.outcomes(),
        probs.iter().enumerate().map(|(j, &p)| tilted_mass(&alloc, j, p, lambda)),
    )
}

/// Sharp bound on one arm's target mean, with the attaining multipliers.
///
/// Starts every coordinate at `p_j/Λ` and hands out the budget `1 - 1/Λ`
/// from the largest outcome down (upper) or smallest up (lower), each
/// coordinate capped at `p_j(Λ - 1/Λ)`.
pub fn greedy_arm_bound(
    dist: &ArmDistribution,
    lambda: SensitivityParam,
    direction: Direction,
) -> (f64, Multipliers) {
    let l = lambda.value();
    let probs = dist.probs();
    let alloc = allocate(probs, l, direction);
    let mut values = vec![1.0 / l; probs.len()];
    for j in alloc.saturated.clone() {
        values[j] = l;
    }
    if let Some((j, extra)) = alloc.partial {
        values[j] = (probs[j] / l + extra) / probs[j];
    }
    let value = objective(
        dist.outcomes(),
        probs.iter().enumerate().map(|(j, &p)| tilted_mass(&alloc, j, p, l)),
    );
    (value, Multipliers { values, lambda: l })
}

/// Threshold-enumeration oracle for the per-arm linear program.
///
/// For each position `t` the coordinates on the favourable side of `t` are
/// set to `Λ`, the rest to `1/Λ`, and coordinate `t` is solved from the
/// normalization constraint. Infeasible placements are discarded and the best
/// objective among the rest is returned. Quadratic in the arm size; meant for
/// arms of at most ten thousand outcomes.
pub fn oracle_arm_bound(
    dist: &ArmDistribution,
    lambda: SensitivityParam,
    direction: Direction,
) -> Result<f64> {
    let l = lambda.value();
    let (ys, ps) = (dist.outcomes(), dist.probs());
    let n = ys.len();
    let mut best: Option<f64> = None;
    for t in 0..n {
        let multiplier = |j: usize| {
            let favoured = match direction {
                Direction::Upper => j > t,
                Direction::Lower => j < t,
            };
            if favoured {
                l
            } else {
                1.0 / l
            }
        };
        let mut fixed_mass = 0.0;
        let mut fixed_objective = 0.0;
        for j in (0..n).filter(|&j| j != t) {
            fixed_mass += ps[j] * multiplier(j);
            fixed_objective += ps[j] * multiplier(j) * ys[j];
        }
        let q_t = 1.0 - fixed_mass;
        if q_t < ps[t] / l - ORACLE_FEASIBILITY_TOL || q_t > ps[t] * l + ORACLE_FEASIBILITY_TOL {
            continue;
        }
        let candidate = fixed_objective + q_t * ys[t];
        best = Some(match (best, direction) {
            (None, _) => candidate,
            (Some(b), Direction::Upper) => b.max(candidate),
            (Some(b), Direction::Lower) => b.min(candidate),
        });
    }
    best.ok_or(Error::NoFeasibleThreshold)
}

/// Bound via the quantile representation
/// `mean/Λ + (Λ - 1/Λ) ∫ Q(u) du`, integrating the generalized quantile
/// function over the top `ρ = 1/(Λ+1)` of mass (upper) or the bottom `ρ`
/// (lower). The atom straddling the cut contributes pro rata.
pub fn quantile_functional_bound(
    dist: &ArmDistribution,
    lambda: SensitivityParam,
    direction: Direction,
) -> f64 {
    let l = lambda.value();
    let rho = 1.0 / (l + 1.0);
    let atoms = dist.outcomes().iter().zip(dist.probs());
    let mut remaining = rho;
    let mut tail = 0.0;
    let mut take = |(&y, &p): (&f64, &f64)| {
        let mass = p.min(remaining);
        tail += mass * y;
        remaining -= mass;
        remaining > 0.0
    };
    match direction {
        Direction::Upper => {
            for atom in atoms.rev() {
                if !take(atom) {
                    break;
                }
            }
        }
        Direction::Lower => {
            for atom in atoms {
                if !take(atom) {
                    break;
                }
            }
        }
    }
    dist.mean() / l + (l - 1.0 / l) * tail
}

/// Both arms of a trial prepared once, so bounds at many `Λ` reuse the sort.
#[derive(Debug, Clone)]
pub struct ArmPair {
    pub treated: ArmDistribution,
    pub control: ArmDistribution,
}

impl ArmPair {
    pub fn new(dataset: &TrialDataset, raw_weights: &[f64]) -> Result<Self> {
        Ok(Self {
            treated: build_arm_distribution(dataset, raw_weights, Arm::Treated)?,
            control: build_arm_distribution(dataset, raw_weights, Arm::Control)?,
        })
    }

    pub fn arm(&self, arm: Arm) -> &ArmDistribution {
        match arm {
            Arm::Treated => &self.treated,
            Arm::Control => &self.control,
        }
    }

    /// `[μ₊⁻ - μ₋⁺, μ₊⁺ - μ₋⁻]`.
    pub fn ate_bounds(&self, lambda: SensitivityParam) -> BoundInterval {
        let l = lambda.value();
        let lower = greedy_value(&self.treated, l, Direction::Lower)
            - greedy_value(&self.control, l, Direction::Upper);
        let upper = greedy_value(&self.treated, l, Direction::Upper)
            - greedy_value(&self.control, l, Direction::Lower);
        BoundInterval { lower, upper, lambda: l }
    }

    pub fn envelope(&self, lambda_grid: &[f64]) -> Result<Envelope> {
        check_grid(lambda_grid)?;
        let intervals = lambda_grid
            .iter()
            .map(|&l| SensitivityParam::new(l).map(|l| self.ate_bounds(l)))
            .collect::<Result<Vec<_>>>()?;
        for pair in intervals.windows(2) {
            if !pair[0].is_within(&pair[1], NESTING_TOL) {
                return Err(Error::NotNested(pair[1].lambda));
            }
        }
        Ok(Envelope { lambdas: lambda_grid.to_vec(), intervals })
    }
}

/// Sharp bounds on the target ATE at one `Λ`.
pub fn ate_bounds(
    dataset: &TrialDataset,
    raw_weights: &[f64],
    lambda: SensitivityParam,
) -> Result<BoundInterval> {
    Ok(ArmPair::new(dataset, raw_weights)?.ate_bounds(lambda))
}

/// ATE bounds over a nondecreasing grid of `Λ` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelope {
    pub lambdas: Vec<f64>,
    pub intervals: Vec<BoundInterval>,
}

impl Envelope {
    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.intervals.iter().map(BoundInterval::width)
    }
}

fn check_grid(lambda_grid: &[f64]) -> Result<()> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidParameter("lambda grid is empty"));
    }
    for &l in lambda_grid {
        SensitivityParam::new(l)?;
    }
    if lambda_grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::GridNotAscending);
    }
    Ok(())
}

/// Sharp bounds at every `Λ` of a nondecreasing grid. Intervals are checked to
/// be nested along the grid.
pub fn sensitivity_envelope(
    dataset: &TrialDataset,
    raw_weights: &[f64],
    lambda_grid: &[f64],
) -> Result<Envelope> {
    check_grid(lambda_grid)?;
    ArmPair::new(dataset, raw_weights)?.envelope(lambda_grid)
}

/// Greedy multipliers for one arm and direction, aligned with the arm's
/// sorted outcomes.
pub fn extract_multipliers(
    dataset: &TrialDataset,
    raw_weights: &[f64],
    lambda: SensitivityParam,
    arm: Arm,
    direction: Direction,
) -> Result<Multipliers> {
    let dist = build_arm_distribution(dataset, raw_weights, arm)?;
    Ok(greedy_arm_bound(&dist, lambda, direction).1)
}

/// Outcome range assumed by [`worst_case_bounds`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OutcomeSupport {
    /// Both arm means lie in `[lower, upper]`.
    Known { lower: f64, upper: f64 },
    /// Both arm means lie in the observed range of the pooled trial outcomes.
    PooledEmpirical,
    /// Each arm mean lies in the observed range of that arm's outcomes.
    ArmEmpirical,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorstCaseBounds {
    pub interval: BoundInterval,
    /// Set when the assumed support collapses to a point.
    pub degenerate: bool,
}

/// Bounds that assume nothing beyond bounded outcomes: each arm's target mean
/// may be anywhere in its support, so `τ ∈ [min₊ - max₋, max₊ - min₋]`.
pub fn worst_case_bounds(
    dataset: &TrialDataset,
    raw_weights: &[f64],
    support: OutcomeSupport,
) -> Result<WorstCaseBounds> {
    check_weights(dataset, raw_weights)?;
    let range = |arm: Option<Arm>| {
        dataset
            .units()
            .iter()
            .filter(|u| arm.is_none_or(|a| u.a == a))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), u| (lo.min(u.y), hi.max(u.y)))
    };
    let (treated, control) = match support {
        OutcomeSupport::Known { lower, upper } => {
            if !(lower <= upper) {
                return Err(Error::InvalidParameter("support lower end exceeds upper end"));
            }
            ((lower, upper), (lower, upper))
        }
        OutcomeSupport::PooledEmpirical => {
            let r = range(None);
            (r, r)
        }
        OutcomeSupport::ArmEmpirical => (range(Some(Arm::Treated)), range(Some(Arm::Control))),
    };
    let interval = BoundInterval {
        lower: treated.0 - control.1,
        upper: treated.1 - control.0,
        lambda: f64::INFINITY,
    };
    let degenerate = treated.0 == treated.1 && control.0 == control.1;
    Ok(WorstCaseBounds { interval, degenerate })
}
