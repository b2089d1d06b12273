//! Simulation data-generating processes.
//!
//! Trial covariates are `N(0, I_p)` and target covariates `N(mu_shift·1, I_p)`
//! (both truncated to a box for the bounded design). An unobserved moderator
//! `U | X ~ N(γ_s X₁, 1)` differs between trial (`γ_r`) and target (`γ_o`),
//! so outcome transportability fails whenever `γ_o ≠ γ_r`. Treatment is a fair
//! coin on `{-1, +1}`.

use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;
use core::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::{stream_rng, SimRng, DATA_STREAM, TRUTH_STREAM};
use crate::special::{compensated_sum, normal_cdf, truncated_normal_mean};
use crate::types::{Arm, TargetCovariates, TrialDataset, TrialUnit};
use crate::weights::oracle_gaussian_weights;

/// Monte Carlo draws used for ground truth when no closed form exists.
pub const DEFAULT_TRUTH_DRAWS: usize = 1_000_000;
/// Seed of the ground-truth Monte Carlo run.
pub const TRUTH_SEED: u64 = 20_240_601;
/// Fewest draws accepted by [`true_ate`] for Monte Carlo kinds.
pub const MIN_TRUTH_DRAWS: usize = 100_000;
/// Attempts allowed per truncated-normal draw.
pub const MAX_REJECTIONS: u64 = 1_000_000;

/// Randomization probability of every simulated trial.
pub const TRIAL_PI: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DgpKind {
    /// DGP 1: linear outcome, Gaussian errors.
    Linear,
    /// DGP 2: `sin(π x₁/2) + x₂²` baseline, effect modified by `|U|·sign(x₁)`.
    Nonlinear,
    /// DGP 3: Bernoulli outcome with a logistic link.
    Binary,
    /// DGP 4: DGP 1 with `t₃` errors rescaled to variance `σ²`.
    HeavyTail,
    /// DGP 7: truncated covariates and truncated-normal outcomes.
    Bounded,
}

impl DgpKind {
    pub const ALL: [DgpKind; 5] =
        [DgpKind::Linear, DgpKind::Nonlinear, DgpKind::Binary, DgpKind::HeavyTail, DgpKind::Bounded];

    pub fn name(self) -> &'static str {
        match self {
            DgpKind::Linear => "linear",
            DgpKind::Nonlinear => "nonlinear",
            DgpKind::Binary => "binary",
            DgpKind::HeavyTail => "heavy_tail",
            DgpKind::Bounded => "bounded",
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" | "dgp1" => Ok(DgpKind::Linear),
            "nonlinear" | "dgp2" => Ok(DgpKind::Nonlinear),
            "binary" | "dgp3" => Ok(DgpKind::Binary),
            "heavy_tail" | "dgp4" => Ok(DgpKind::HeavyTail),
            "bounded" | "dgp7" => Ok(DgpKind::Bounded),
            _ => Err(Error::InvalidParameter("unknown DGP kind")),
        }
    }
}

/// Truncation used by [`DgpKind::Bounded`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundedSupport {
    /// Covariates live in `[-cov_box, cov_box]^p`.
    pub cov_box: f64,
    pub y_lower: f64,
    pub y_upper: f64,
}

/// Full parameterization of a simulation design.
///
/// For the bounded kind `mu_shift` is the mean of the (untruncated) target
/// covariate law.
#[derive(Debug, Clone, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    pub p: usize,
    pub mu_shift: f64,
    pub gamma_r: f64,
    pub gamma_o: f64,
    pub beta0: f64,
    pub beta_x: Vec<f64>,
    pub tau0: f64,
    pub beta_u: f64,
    pub sigma: f64,
    pub bounds: Option<BoundedSupport>,
}

impl DgpSpec {
    pub fn defaults(kind: DgpKind) -> Self {
        let dgp1 = DgpSpec {
            kind,
            p: 5,
            mu_shift: 0.5,
            gamma_r: 0.0,
            gamma_o: 0.5,
            beta0: 1.0,
            beta_x: alloc::vec![0.3, 0.2, 0.1, 0.1, 0.1],
            tau0: 1.0,
            beta_u: 0.5,
            sigma: 1.0,
            bounds: None,
        };
        match kind {
            DgpKind::Linear | DgpKind::Nonlinear | DgpKind::HeavyTail => dgp1,
            DgpKind::Binary => DgpSpec { beta0: -0.5, tau0: 0.5, beta_u: 0.3, ..dgp1 },
            DgpKind::Bounded => DgpSpec {
                gamma_o: 0.2,
                beta_x: alloc::vec![0.5, 0.3, 0.2, 0.1, 0.1],
                beta_u: 0.25,
                bounds: Some(BoundedSupport { cov_box: 3.0, y_lower: -3.0, y_upper: 3.0 }),
                ..dgp1
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1"));
        }
        if self.kind == DgpKind::Nonlinear && self.p < 2 {
            return Err(Error::InvalidParameter("nonlinear DGP needs p >= 2"));
        }
        if self.beta_x.len() != self.p {
            return Err(Error::InvalidParameter("beta_x must have length p"));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive"));
        }
        let finite = [self.mu_shift, self.gamma_r, self.gamma_o, self.beta0, self.tau0, self.beta_u]
            .iter()
            .chain(&self.beta_x)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidParameter("DGP parameters must be finite"));
        }
        match (self.kind, self.bounds) {
            (DgpKind::Bounded, None) => {
                Err(Error::InvalidParameter("bounded DGP needs cov_box and y range"))
            }
            (DgpKind::Bounded, Some(b)) if !(b.cov_box > 0.0) => {
                Err(Error::InvalidParameter("cov_box must be positive"))
            }
            (DgpKind::Bounded, Some(b)) if !(b.y_lower < b.y_upper) => {
                Err(Error::InvalidParameter("y_lower must be below y_upper"))
            }
            _ => Ok(()),
        }
    }

    fn covariates(&self, rng: &mut SimRng, mean: f64) -> Result<Vec<f64>> {
        (0..self.p)
            .map(|_| match self.bounds.filter(|_| self.kind == DgpKind::Bounded) {
                Some(b) => truncated_normal(rng, mean, 1.0, -b.cov_box, b.cov_box),
                None => Ok(mean + standard_normal(rng)),
            })
            .collect()
    }

    /// Draws `U | X = x` in the population with moderator slope `gamma`.
    pub fn moderator(&self, rng: &mut SimRng, x: &[f64], gamma: f64) -> f64 {
        gamma * x[0] + standard_normal(rng)
    }

    fn linear_index(&self, x: &[f64]) -> f64 {
        self.beta0 + self.beta_x.iter().zip(x).map(|(b, x)| b * x).sum::<f64>()
    }

    /// Conditional mean of `Y(a)` given `(x, u)` before any outcome noise or
    /// link function.
    pub fn outcome_location(&self, x: &[f64], arm: Arm, u: f64) -> f64 {
        let a = arm.sign();
        match self.kind {
            DgpKind::Nonlinear => {
                self.beta0
                    + libm::sin(PI * x[0] / 2.0)
                    + x[1] * x[1]
                    + a * (self.tau0 + self.beta_u * libm::fabs(u) * sign(x[0]))
            }
            _ => self.linear_index(x) + a * (self.tau0 + self.beta_u * u),
        }
    }

    /// Draws the potential outcome `Y(a)` given covariates and moderator.
    pub fn outcome(&self, rng: &mut SimRng, x: &[f64], arm: Arm, u: f64) -> Result<f64> {
        let loc = self.outcome_location(x, arm, u);
        Ok(match self.kind {
            DgpKind::Linear | DgpKind::Nonlinear => loc + self.sigma * standard_normal(rng),
            DgpKind::HeavyTail => loc + self.sigma / libm::sqrt(3.0) * student_t3(rng),
            DgpKind::Binary => {
                if rng.random::<f64>() < logistic(loc) {
                    1.0
                } else {
                    0.0
                }
            }
            DgpKind::Bounded => {
                let b = self.bounds.ok_or(Error::InvalidParameter("missing bounds"))?;
                truncated_normal(rng, loc, self.sigma, b.y_lower, b.y_upper)?
            }
        })
    }

    /// `E[Y(+1) - Y(-1) | x, u]`.
    fn contrast(&self, x: &[f64], u: f64) -> f64 {
        let plus = self.outcome_location(x, Arm::Treated, u);
        let minus = self.outcome_location(x, Arm::Control, u);
        match self.kind {
            DgpKind::Binary => logistic(plus) - logistic(minus),
            DgpKind::Bounded => {
                let b = self.bounds.expect("validated bounded spec");
                truncated_normal_mean(plus, self.sigma, b.y_lower, b.y_upper)
                    - truncated_normal_mean(minus, self.sigma, b.y_lower, b.y_upper)
            }
            _ => plus - minus,
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

fn standard_normal(rng: &mut SimRng) -> f64 {
    StandardNormal.sample(rng)
}

/// Standard Student t with three degrees of freedom: `Z / sqrt(χ²₃ / 3)`.
fn student_t3(rng: &mut SimRng) -> f64 {
    let z = standard_normal(rng);
    let chi2: f64 = (0..3).map(|_| {
        let z = standard_normal(rng);
        z * z
    }).sum();
    z / libm::sqrt(chi2 / 3.0)
}

/// `N(mean, sd²)` conditioned on `[lo, hi]`, by rejection.
pub fn truncated_normal(rng: &mut SimRng, mean: f64, sd: f64, lo: f64, hi: f64) -> Result<f64> {
    for _ in 0..MAX_REJECTIONS {
        let y = mean + sd * standard_normal(rng);
        if (lo..=hi).contains(&y) {
            return Ok(y);
        }
    }
    Err(Error::RejectionStall(MAX_REJECTIONS))
}

/// One simulated study.
#[derive(Debug, Clone, PartialEq)]
pub struct SimDraw {
    pub trial: TrialDataset,
    pub target: TargetCovariates,
    pub true_tau: f64,
    pub seed: u64,
}

impl SimDraw {
    pub fn trial_rows(&self) -> Vec<&[f64]> {
        self.trial.covariates().collect()
    }

    pub fn target_rows(&self) -> Vec<&[f64]> {
        self.target.rows().iter().map(Vec::as_slice).collect()
    }

    /// Known covariate density ratio. For the bounded design the ratio of the
    /// truncated laws differs from this only by a constant, which the per-arm
    /// normalization removes.
    pub fn oracle_weights(&self, mu_shift: f64) -> Vec<f64> {
        oracle_gaussian_weights(&self.trial_rows(), mu_shift)
    }
}

/// A design with its ground truth computed once, for repeated draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulator {
    spec: DgpSpec,
    true_tau: f64,
}

impl Simulator {
    pub fn new(spec: DgpSpec) -> Result<Self> {
        let true_tau = true_ate(&spec, DEFAULT_TRUTH_DRAWS, TRUTH_SEED)?;
        Ok(Self { spec, true_tau })
    }

    pub fn with_truth(spec: DgpSpec, true_tau: f64) -> Result<Self> {
        spec.validate()?;
        Ok(Self { spec, true_tau })
    }

    pub fn spec(&self) -> &DgpSpec {
        &self.spec
    }

    pub fn true_tau(&self) -> f64 {
        self.true_tau
    }

    /// Deterministic in `(spec, n_r, n_o, seed)`.
    pub fn draw(&self, n_r: usize, n_o: usize, seed: u64) -> Result<SimDraw> {
        if n_r < 2 || n_o < 2 {
            return Err(Error::InvalidParameter("n_r and n_o must be at least 2"));
        }
        let spec = &self.spec;
        let mut rng = stream_rng(seed, DATA_STREAM);
        let mut units = Vec::with_capacity(n_r);
        for _ in 0..n_r {
            let x = spec.covariates(&mut rng, 0.0)?;
            let u = spec.moderator(&mut rng, &x, spec.gamma_r);
            let a = if rng.random::<bool>() { Arm::Treated } else { Arm::Control };
            let y = spec.outcome(&mut rng, &x, a, u)?;
            units.push(TrialUnit { x, a, y });
        }
        // A fair coin leaves an arm empty with probability 2^(1-n_r); flip the
        // last unit's arm in that case so the dataset stays usable.
        if units.iter().all(|u| u.a == units[0].a) {
            let last = units.last_mut().expect("n_r >= 2");
            last.a = if last.a == Arm::Treated { Arm::Control } else { Arm::Treated };
            let u = spec.moderator(&mut rng, &last.x, spec.gamma_r);
            last.y = spec.outcome(&mut rng, &last.x, last.a, u)?;
        }
        let target = (0..n_o)
            .map(|_| spec.covariates(&mut rng, spec.mu_shift))
            .collect::<Result<Vec<_>>>()?;
        Ok(SimDraw {
            trial: TrialDataset::new(units, TRIAL_PI)?,
            target: TargetCovariates::new(target)?,
            true_tau: self.true_tau,
            seed,
        })
    }
}

/// One study from `spec`, with ground truth from [`true_ate`] at the default
/// Monte Carlo size.
pub fn generate(spec: &DgpSpec, n_r: usize, n_o: usize, seed: u64) -> Result<SimDraw> {
    Simulator::new(spec.clone())?.draw(n_r, n_o, seed)
}

/// Target-population ATE.
///
/// Closed form `2τ₀ + 2β_u γ_o mu_shift` for the linear and heavy-tailed
/// kinds; otherwise the average of `E[Y(+1) - Y(-1) | X, U]` over `n_truth`
/// draws of `(X, U)` from the target law.
pub fn true_ate(spec: &DgpSpec, n_truth: usize, seed: u64) -> Result<f64> {
    spec.validate()?;
    if matches!(spec.kind, DgpKind::Linear | DgpKind::HeavyTail) {
        return Ok(2.0 * spec.tau0 + 2.0 * spec.beta_u * spec.gamma_o * spec.mu_shift);
    }
    if n_truth < MIN_TRUTH_DRAWS {
        return Err(Error::InvalidParameter("n_truth must be at least 1e5 for Monte Carlo truth"));
    }
    let mut rng = stream_rng(seed, TRUTH_STREAM);
    let mut contrasts = Vec::with_capacity(n_truth);
    for _ in 0..n_truth {
        let x = spec.covariates(&mut rng, spec.mu_shift)?;
        let u = spec.moderator(&mut rng, &x, spec.gamma_o);
        contrasts.push(spec.contrast(&x, u));
    }
    Ok(compensated_sum(contrasts) / n_truth as f64)
}

/// Quadrature nodes for `X₁ ~ N(0, 1)`.
const TRIM_NODES: usize = 8001;
const TRIM_HALF_RANGE: f64 = 12.0;

/// Tail-trimmed implied sensitivity parameter of the linear design.
///
/// Given `X₁ = x`, both populations have Gaussian outcomes with common
/// variance `v = σ² + β_u²` and means `δ(x) = ±β_u(γ_o - γ_r)x` apart, so the
/// log likelihood ratio evaluated at a trial outcome is
/// `N(-δ²/2v, δ²/v)`. The returned `Λ` is the smallest value with
/// `1/Λ ≤ f^o/f^r ≤ Λ` on a set carrying `1 - alpha` of the trial law of
/// `(X₁, Y)`, i.e. `exp` of the `1 - alpha` quantile of `|log LR|`.
pub fn tail_trimmed_lambda(spec: &DgpSpec, alpha: f64) -> Result<f64> {
    spec.validate()?;
    if spec.kind != DgpKind::Linear {
        return Err(Error::UnsupportedKind("tail-trimmed lambda needs the linear DGP"));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::InvalidParameter("alpha must lie in (0, 0.5)"));
    }
    let slope = libm::fabs(spec.beta_u * (spec.gamma_o - spec.gamma_r));
    if slope == 0.0 {
        return Ok(1.0);
    }
    let sd = libm::sqrt(spec.sigma * spec.sigma + spec.beta_u * spec.beta_u);

    // P(|log LR| <= t), integrating the conditional probability over x.
    let coverage = |t: f64| {
        let h = 2.0 * TRIM_HALF_RANGE / (TRIM_NODES - 1) as f64;
        let terms = (0..TRIM_NODES).map(|i| {
            let x = -TRIM_HALF_RANGE + i as f64 * h;
            let z = slope * libm::fabs(x) / sd;
            let inner = if z == 0.0 {
                1.0
            } else {
                let centre = 0.5 * z * z;
                normal_cdf((t + centre) / z) - normal_cdf((centre - t) / z)
            };
            let end = if i == 0 || i == TRIM_NODES - 1 { 0.5 } else { 1.0 };
            end * h * inner * libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
        });
        compensated_sum(terms)
    };

    let target = 1.0 - alpha;
    let mut hi = 1.0;
    while coverage(hi) < target {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if coverage(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(libm::exp(hi))
}
