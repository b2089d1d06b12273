//! Generalization weights: a logistic model for target-population membership
//! fitted by iteratively reweighted least squares, the inverse-odds weights it
//! implies, and closed-form Gaussian density-ratio weights for simulations.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::SquareMatrix;
use crate::special::compensated_sum;

/// Linear predictors are clamped to `±LINEAR_PREDICTOR_CLAMP` before
/// exponentiation.
pub const LINEAR_PREDICTOR_CLAMP: f64 = 30.0;

/// A coefficient this large signals (quasi-)separation.
pub const SEPARATION_LIMIT: f64 = 30.0;

const RIDGE_JITTER: f64 = 1e-10;
const MAX_STEP_HALVINGS: usize = 40;
/// A pooled log-likelihood above this means every unit is classified
/// essentially perfectly, which only happens under separation.
const PERFECT_FIT_LOGLIK: f64 = -1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub max_iter: usize,
    pub tol: f64,
    /// 1-based covariate indices to include; `None` uses all of them.
    pub feature_subset: Option<Vec<usize>>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-8, feature_subset: None }
    }
}

impl FitConfig {
    pub fn with_features(features: Vec<usize>) -> Self {
        Self { feature_subset: Some(features), ..Self::default() }
    }
}

/// Fitted `logit P(S = target | X = x) = intercept + coefs·x`.
///
/// `coefs` always has one entry per covariate; covariates left out of the
/// fit have coefficient zero.
#[derive(Debug, Clone, PartialEq)]
pub struct MembershipModel {
    pub intercept: f64,
    pub coefs: Vec<f64>,
    pub n_r: usize,
    pub n_o: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Pooled log-likelihood at the start and after every accepted step.
    pub loglik_path: Vec<f64>,
}

impl MembershipModel {
    /// Model with every coefficient zero, giving unit weights.
    pub fn zero(p: usize) -> Self {
        Self {
            intercept: 0.0,
            coefs: vec![0.0; p],
            n_r: 0,
            n_o: 0,
            converged: true,
            iterations: 0,
            loglik_path: Vec::new(),
        }
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept + self.coefs.iter().zip(x).map(|(b, x)| b * x).sum::<f64>()
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + libm::log1p(libm::exp(-z))
    } else {
        libm::log1p(libm::exp(z))
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

struct Design<'a> {
    rows: Vec<(&'a [f64], f64)>,
    features: Vec<usize>,
}

impl Design<'_> {
    fn eta(&self, beta: &[f64], x: &[f64]) -> f64 {
        beta[0] + self.features.iter().zip(&beta[1..]).map(|(&f, b)| b * x[f]).sum::<f64>()
    }

    fn loglik(&self, beta: &[f64]) -> f64 {
        compensated_sum(self.rows.iter().map(|&(x, s)| {
            let eta = self.eta(beta, x);
            s * eta - softplus(eta)
        }))
    }
}

/// Fits the membership model on the pooled sample, trial rows labelled 0 and
/// target rows labelled 1.
///
/// Newton/IRLS steps with step halving, so the log-likelihood never
/// decreases. Converged when the largest coefficient change drops below
/// `config.tol`.
pub fn fit_membership(
    trial_x: &[&[f64]],
    target_x: &[&[f64]],
    config: &FitConfig,
) -> Result<MembershipModel> {
    let p = trial_x.first().ok_or(Error::EmptySample)?.len();
    if target_x.is_empty() {
        return Err(Error::EmptySample);
    }
    for (row, x) in trial_x.iter().chain(target_x).enumerate() {
        if x.len() != p {
            return Err(Error::Dimension { row, expected: p, got: x.len() });
        }
    }
    let features: Vec<usize> = match &config.feature_subset {
        None => (0..p).collect(),
        Some(subset) => subset
            .iter()
            .map(|&f| if (1..=p).contains(&f) { Ok(f - 1) } else { Err(Error::InvalidFeature(f)) })
            .collect::<Result<_>>()?,
    };
    let design = Design {
        rows: trial_x
            .iter()
            .map(|&x| (x, 0.0))
            .chain(target_x.iter().map(|&x| (x, 1.0)))
            .collect(),
        features,
    };
    let k = design.features.len() + 1;
    let mut beta = vec![0.0; k];
    let mut loglik = design.loglik(&beta);
    let mut loglik_path = vec![loglik];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let mut hessian = SquareMatrix::zeros(k);
        let mut grad = vec![0.0; k];
        let mut z = vec![0.0; k];
        for &(x, s) in &design.rows {
            let mu = sigmoid(design.eta(&beta, x));
            let w = mu * (1.0 - mu);
            z[0] = 1.0;
            for (zi, &f) in z[1..].iter_mut().zip(&design.features) {
                *zi = x[f];
            }
            for i in 0..k {
                grad[i] += (s - mu) * z[i];
                for j in 0..=i {
                    hessian.add(i, j, w * z[i] * z[j]);
                }
            }
        }
        for i in 0..k {
            for j in 0..i {
                hessian.add(j, i, hessian.get(i, j));
            }
            hessian.add(i, i, RIDGE_JITTER);
        }
        let step = hessian.cholesky_solve(&grad).ok_or(Error::SingularHessian)?;

        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_STEP_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, d)| b + scale * d).collect();
            let ll = design.loglik(&trial);
            if ll >= loglik {
                accepted = Some((trial, ll));
                break;
            }
            scale *= 0.5;
        }
        // No ascent along the Newton direction: we are at the optimum to
        // working precision.
        let Some((next, ll)) = accepted else {
            converged = true;
            break;
        };
        let change = next.iter().zip(&beta).fold(0.0_f64, |m, (a, b)| m.max(libm::fabs(a - b)));
        beta = next;
        loglik = ll;
        loglik_path.push(ll);
        if let Some(&big) = beta.iter().find(|b| libm::fabs(**b) > SEPARATION_LIMIT) {
            return Err(Error::Separation(big));
        }
        if loglik > PERFECT_FIT_LOGLIK {
            let big = beta.iter().copied().fold(0.0_f64, |m, b| if libm::fabs(b) > libm::fabs(m) { b } else { m });
            return Err(Error::Separation(big));
        }
        if change < config.tol {
            converged = true;
            break;
        }
    }

    let mut coefs = vec![0.0; p];
    for (&f, &b) in design.features.iter().zip(&beta[1..]) {
        coefs[f] = b;
    }
    Ok(MembershipModel {
        intercept: beta[0],
        coefs,
        n_r: trial_x.len(),
        n_o: target_x.len(),
        converged,
        iterations,
        loglik_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseOddsWeights {
    pub weights: Vec<f64>,
    /// Units whose linear predictor hit the clamp.
    pub clamped: usize,
}

/// `exp(intercept + coefs·x)` per row. The constant prevalence factor is left
/// in because per-arm normalization removes it.
pub fn inverse_odds_weights(model: &MembershipModel, rows: &[&[f64]]) -> InverseOddsWeights {
    let mut clamped = 0;
    let weights = rows
        .iter()
        .map(|x| {
            let eta = model.linear_predictor(x);
            if libm::fabs(eta) > LINEAR_PREDICTOR_CLAMP {
                clamped += 1;
            }
            libm::exp(eta.clamp(-LINEAR_PREDICTOR_CLAMP, LINEAR_PREDICTOR_CLAMP))
        })
        .collect();
    InverseOddsWeights { weights, clamped }
}

/// Density ratio of `N(mu_shift·1, I)` to `N(0, I)`:
/// `exp(mu_shift·Σx - p·mu_shift²/2)`.
pub fn oracle_gaussian_weights(rows: &[&[f64]], mu_shift: f64) -> Vec<f64> {
    rows.iter()
        .map(|x| {
            let p = x.len() as f64;
            libm::exp(mu_shift * x.iter().sum::<f64>() - 0.5 * p * mu_shift * mu_shift)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightDiagnostics {
    pub max_weight: f64,
    pub effective_sample_size: f64,
    pub clamped_count: usize,
}

/// Maximum weight and Kish effective sample size `(Σw)² / Σw²`.
pub fn weight_diagnostics(weights: &[f64], clamped_count: usize) -> WeightDiagnostics {
    let sum = compensated_sum(weights.iter().copied());
    let sum_sq = compensated_sum(weights.iter().map(|w| w * w));
    WeightDiagnostics {
        max_weight: weights.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        effective_sample_size: sum * sum / sum_sq,
        clamped_count,
    }
}
