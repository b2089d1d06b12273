//! Monte Carlo replication engine behind the simulation studies.
//!
//! Every study is a set of independent replicates. Replicate `r` draws its
//! data from seed `base + r`, so results do not depend on how replicates are
//! spread over worker threads: per-replicate results are collected in
//! replicate order and all reductions run serially over that order.

use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use transport_bounds::baselines::{bootstrap_ci, naive_point_estimate, BootstrapWeights, PercentileInterval};
use transport_bounds::bounds::ArmPair;
use transport_bounds::dgp::{tail_trimmed_lambda, DgpKind, DgpSpec, SimDraw, Simulator};
use transport_bounds::rng::replicate_seed;
use transport_bounds::special::compensated_sum;
use transport_bounds::weights::{
    fit_membership, inverse_odds_weights, weight_diagnostics, FitConfig, WeightDiagnostics,
};
use transport_bounds::{
    greedy_arm_bound, worst_case_bounds, Arm, BoundInterval, Direction, Error as CoreError,
    Multipliers, OutcomeSupport, SensitivityParam, WorstCaseBounds,
};

/// Two-sided 95% standard normal quantile used for Wilson intervals.
pub const WILSON_Z: f64 = 1.959_963_984_540_054;

/// Seed offset for the single large draw behind oracle widths, far from any
/// replicate seed `base + r`.
pub const ORACLE_SEED_OFFSET: u64 = 1 << 40;

/// Smallest trial size accepted for an oracle-width draw.
pub const MIN_ORACLE_N: usize = 10_000;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("replicate {replicate} (seed {seed}) failed: {source}")]
    Replicate {
        replicate: usize,
        seed: u64,
        #[source]
        source: CoreError,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("invalid setting: {0}")]
    Setting(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("could not start worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

/// How the generalization weights of a simulated trial are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightMode {
    /// The known covariate density ratio.
    Oracle,
    /// Membership model on all covariates.
    Fitted,
    /// Membership model on the listed covariates (1-based).
    FittedSubset(Vec<usize>),
}

impl WeightMode {
    pub fn name(&self) -> String {
        match self {
            WeightMode::Oracle => "oracle".into(),
            WeightMode::Fitted => "fitted".into(),
            WeightMode::FittedSubset(f) => {
                let list: Vec<String> = f.iter().map(usize::to_string).collect();
                format!("fitted:{}", list.join(","))
            }
        }
    }
}

impl FromStr for WeightMode {
    type Err = String;

    /// Accepts `oracle`, `fitted` and `fitted:1,3`.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "oracle" => Ok(WeightMode::Oracle),
            "fitted" => Ok(WeightMode::Fitted),
            other => {
                let list = other
                    .strip_prefix("fitted:")
                    .ok_or_else(|| format!("unknown weight mode '{other}'"))?;
                let features = list
                    .split(',')
                    .map(|f| f.trim().parse::<usize>().map_err(|_| format!("bad feature index '{f}'")))
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                Ok(WeightMode::FittedSubset(features))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Weighted {
    pub weights: Vec<f64>,
    pub diagnostics: WeightDiagnostics,
}

/// Weights for the trial units of `draw`.
pub fn weigh(draw: &SimDraw, spec: &DgpSpec, mode: &WeightMode) -> std::result::Result<Weighted, CoreError> {
    let (weights, clamped) = match mode {
        WeightMode::Oracle => (draw.oracle_weights(spec.mu_shift), 0),
        WeightMode::Fitted | WeightMode::FittedSubset(_) => {
            let config = match mode {
                WeightMode::FittedSubset(f) => FitConfig::with_features(f.clone()),
                _ => FitConfig::default(),
            };
            let trial = draw.trial_rows();
            let model = fit_membership(&trial, &draw.target_rows(), &config)?;
            let w = inverse_odds_weights(&model, &trial);
            (w.weights, w.clamped)
        }
    };
    let diagnostics = weight_diagnostics(&weights, clamped);
    Ok(Weighted { weights, diagnostics })
}

/// Settings of one coverage sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub n_r: usize,
    pub n_o: usize,
    pub lambdas: Vec<f64>,
    pub replicates: usize,
    pub weight_mode: WeightMode,
    pub seed: u64,
    pub workers: usize,
    /// Percentile bootstrap around the naive estimate with this many
    /// resamples per replicate.
    pub bootstrap_resamples: Option<usize>,
    /// Trial size of the oracle-width draw; `None` skips oracle widths.
    pub oracle_n_big: Option<usize>,
}

impl SweepConfig {
    pub fn new(n_r: usize, n_o: usize, lambdas: Vec<f64>, replicates: usize, seed: u64) -> Self {
        Self {
            n_r,
            n_o,
            lambdas,
            replicates,
            weight_mode: WeightMode::Oracle,
            seed,
            workers: 1,
            bootstrap_resamples: None,
            oracle_n_big: None,
        }
    }
}

/// Everything recorded for one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replicate_id: usize,
    pub seed: u64,
    /// One interval per grid value.
    pub intervals: Vec<BoundInterval>,
    pub naive: f64,
    pub bootstrap: Option<PercentileInterval>,
    pub worst_case: WorstCaseBounds,
    pub covered: Vec<bool>,
    /// Smallest grid value whose interval covers the truth.
    pub lambda_min: Option<f64>,
    pub diagnostics: WeightDiagnostics,
}

/// Per-grid-value summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaCell {
    pub lambda: f64,
    pub covered: usize,
    pub coverage: f64,
    pub wilson_lower: f64,
    pub wilson_upper: f64,
    pub mean_width: f64,
    pub oracle_width: Option<f64>,
    /// Mean width over oracle width.
    pub sharpness: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineSummary {
    pub naive_coverage: f64,
    pub bootstrap_coverage: Option<f64>,
    pub bootstrap_mean_width: Option<f64>,
    pub worst_case_coverage: f64,
    pub worst_case_mean_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuntimeStats {
    pub mean_bounds_seconds: f64,
    pub max_bounds_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub true_tau: f64,
    pub cells: Vec<LambdaCell>,
    pub baselines: BaselineSummary,
    pub mean_ess: f64,
    pub replications: Vec<ReplicationResult>,
    pub runtime: RuntimeStats,
}

impl SweepSummary {
    pub fn cell(&self, lambda: f64) -> Option<&LambdaCell> {
        self.cells.iter().find(|c| (c.lambda - lambda).abs() < 1e-9)
    }

    pub fn lambda_mins(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.replications.iter().map(|r| r.lambda_min)
    }
}

/// Wilson score interval for `successes` out of `trials`.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = WILSON_Z * WILSON_Z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = WILSON_Z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // At 0 or n successes the matching end is exactly 0 or 1; pin it rather
    // than keep a rounding residue.
    let lower = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let upper = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    (lower, upper)
}

fn mean(values: impl IntoIterator<Item = f64>) -> f64 {
    let values: Vec<f64> = values.into_iter().collect();
    compensated_sum(values.iter().copied()) / values.len() as f64
}

/// Runs `job` for replicates `0..count` on `workers` threads and returns the
/// results in replicate order. When several replicates fail, the error of the
/// lowest-numbered one is returned.
fn run_replicates<T, F>(workers: usize, count: usize, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let results: Vec<Result<T>> = if workers <= 1 {
        (0..count).map(&job).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| ExperimentError::Pool(e.to_string()))?;
        pool.install(|| (0..count).into_par_iter().map(&job).collect())
    };
    results.into_iter().collect()
}

fn check_grid(lambdas: &[f64]) -> Result<()> {
    if lambdas.is_empty() {
        return Err(ExperimentError::Setting("lambda grid is empty".into()));
    }
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(ExperimentError::Setting("lambda grid must be ascending".into()));
    }
    Ok(())
}

fn replicate(sim: &Simulator, cfg: &SweepConfig, id: usize) -> Result<(ReplicationResult, f64)> {
    let seed = replicate_seed(cfg.seed, id as u64);
    let tag = |source: CoreError| ExperimentError::Replicate { replicate: id, seed, source };
    let draw = sim.draw(cfg.n_r, cfg.n_o, seed).map_err(tag)?;
    let weighted = weigh(&draw, sim.spec(), &cfg.weight_mode).map_err(tag)?;
    let weights = &weighted.weights;

    let start = Instant::now();
    let envelope = ArmPair::new(&draw.trial, weights)
        .and_then(|pair| pair.envelope(&cfg.lambdas))
        .map_err(tag)?;
    let bounds_seconds = start.elapsed().as_secs_f64();

    let tau = sim.true_tau();
    let covered: Vec<bool> = envelope.intervals.iter().map(|i| i.contains(tau)).collect();
    if covered.windows(2).any(|w| w[0] && !w[1]) {
        return Err(ExperimentError::Invariant(format!(
            "coverage not monotone in lambda for replicate {id} (seed {seed})"
        )));
    }
    let lambda_min = covered.iter().position(|&c| c).map(|i| cfg.lambdas[i]);
    let naive = naive_point_estimate(&draw.trial, weights).map_err(tag)?;
    let bootstrap = cfg
        .bootstrap_resamples
        .map(|b| bootstrap_ci(&draw.trial, BootstrapWeights::Fixed(weights), b, 0.95, seed))
        .transpose()
        .map_err(tag)?;
    let worst_case =
        worst_case_bounds(&draw.trial, weights, OutcomeSupport::ArmEmpirical).map_err(tag)?;

    let result = ReplicationResult {
        replicate_id: id,
        seed,
        intervals: envelope.intervals,
        naive,
        bootstrap,
        worst_case,
        covered,
        lambda_min,
        diagnostics: weighted.diagnostics,
    };
    Ok((result, bounds_seconds))
}

/// Coverage, width and tipping-point summary of `cfg.replicates` replicates.
///
/// Aborts with the replicate's seed when any replicate fails.
pub fn run_sweep(sim: &Simulator, cfg: &SweepConfig) -> Result<SweepSummary> {
    if cfg.replicates == 0 {
        return Err(ExperimentError::Setting("replicates must be at least 1".into()));
    }
    check_grid(&cfg.lambdas)?;
    let started = Instant::now();
    let oracle = cfg
        .oracle_n_big
        .map(|n| oracle_widths(sim, &cfg.lambdas, &cfg.weight_mode, n, cfg.seed.wrapping_add(ORACLE_SEED_OFFSET)))
        .transpose()?;
    let outcomes = run_replicates(cfg.workers, cfg.replicates, |id| replicate(sim, cfg, id))?;
    let (replications, seconds): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();

    let r = replications.len();
    let tau = sim.true_tau();
    let cells = cfg
        .lambdas
        .iter()
        .enumerate()
        .map(|(k, &lambda)| {
            let covered = replications.iter().filter(|rep| rep.covered[k]).count();
            let (wilson_lower, wilson_upper) = wilson_interval(covered, r);
            let mean_width = mean(replications.iter().map(|rep| rep.intervals[k].width()));
            let oracle_width = oracle.as_ref().map(|o| o[k]);
            LambdaCell {
                lambda,
                covered,
                coverage: covered as f64 / r as f64,
                wilson_lower,
                wilson_upper,
                mean_width,
                oracle_width,
                sharpness: oracle_width.filter(|&o| o > 0.0).map(|o| mean_width / o),
            }
        })
        .collect();

    let fraction = |hits: usize| hits as f64 / r as f64;
    let boot: Vec<&PercentileInterval> = replications.iter().filter_map(|rep| rep.bootstrap.as_ref()).collect();
    let baselines = BaselineSummary {
        naive_coverage: fraction(replications.iter().filter(|rep| rep.naive == tau).count()),
        bootstrap_coverage: (!boot.is_empty()).then(|| fraction(boot.iter().filter(|b| b.contains(tau)).count())),
        bootstrap_mean_width: (!boot.is_empty()).then(|| mean(boot.iter().map(|b| b.width()))),
        worst_case_coverage: fraction(
            replications.iter().filter(|rep| rep.worst_case.interval.contains(tau)).count(),
        ),
        worst_case_mean_width: mean(replications.iter().map(|rep| rep.worst_case.interval.width())),
    };
    let mean_ess = mean(replications.iter().map(|rep| rep.diagnostics.effective_sample_size));
    let runtime = RuntimeStats {
        mean_bounds_seconds: mean(seconds.iter().copied()),
        max_bounds_seconds: seconds.iter().copied().fold(0.0, f64::max),
        total_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(SweepSummary { true_tau: tau, cells, baselines, mean_ess, replications, runtime })
}

/// Interval widths at each `Λ` on one large draw with `n_big` trial and
/// `n_big` target units: the finite-sample stand-in for the population width.
pub fn oracle_widths(
    sim: &Simulator,
    lambdas: &[f64],
    mode: &WeightMode,
    n_big: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_big < MIN_ORACLE_N {
        return Err(ExperimentError::Setting(format!("n_big must be at least {MIN_ORACLE_N}")));
    }
    let draw = sim.draw(n_big, n_big, seed)?;
    let weighted = weigh(&draw, sim.spec(), mode)?;
    let pair = ArmPair::new(&draw.trial, &weighted.weights)?;
    lambdas
        .iter()
        .map(|&l| Ok(pair.ate_bounds(SensitivityParam::new(l)?).width()))
        .collect()
}

pub fn oracle_width(sim: &Simulator, lambda: f64, mode: &WeightMode, n_big: usize, seed: u64) -> Result<f64> {
    Ok(oracle_widths(sim, &[lambda], mode, n_big, seed)?[0])
}

/// First grid value whose coverage reaches `target`.
pub fn breakeven_lambda(sweep: &SweepSummary, target: f64) -> Option<f64> {
    sweep.cells.iter().find(|c| c.coverage >= target).map(|c| c.lambda)
}

/// `1.0, 1.0 + step, …` up to `max` inclusive, each value rounded to twelve
/// decimals so that grid points print cleanly.
pub fn lambda_grid(max: f64, step: f64) -> Vec<f64> {
    let count = ((max - 1.0) / step + 1e-9).floor() as usize;
    (0..=count).map(|i| ((1.0 + i as f64 * step) * 1e12).round() / 1e12).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakevenRow {
    pub gamma_o: f64,
    pub breakeven: Option<f64>,
    pub tail_trimmed: f64,
    pub sweep: SweepSummary,
}

/// Breakeven `Λ` and the tail-trimmed implied `Λ` across moderator shifts.
pub fn breakeven_study(
    base: &DgpSpec,
    gammas: &[f64],
    cfg: &SweepConfig,
    target_coverage: f64,
    alpha: f64,
) -> Result<Vec<BreakevenRow>> {
    gammas
        .iter()
        .map(|&gamma_o| {
            let spec = DgpSpec { gamma_o, ..base.clone() };
            let sim = Simulator::new(spec.clone())?;
            let sweep = run_sweep(&sim, cfg)?;
            Ok(BreakevenRow {
                gamma_o,
                breakeven: breakeven_lambda(&sweep, target_coverage),
                tail_trimmed: tail_trimmed_lambda(&spec, alpha)?,
                sweep,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineRow {
    pub method: &'static str,
    pub lambda: f64,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Naive point estimate, its percentile bootstrap, worst-case bounds and the
/// sharp bounds on the same replicates.
pub fn baselines_study(sim: &Simulator, cfg: &SweepConfig) -> Result<(Vec<BaselineRow>, SweepSummary)> {
    if cfg.bootstrap_resamples.is_none() {
        return Err(ExperimentError::Setting("baselines need bootstrap_resamples".into()));
    }
    let sweep = run_sweep(sim, cfg)?;
    let b = &sweep.baselines;
    let mut rows = Vec::new();
    for cell in &sweep.cells {
        let lambda = cell.lambda;
        rows.push(BaselineRow { method: "naive", lambda, coverage: b.naive_coverage, mean_width: 0.0 });
        rows.push(BaselineRow {
            method: "bootstrap",
            lambda,
            coverage: b.bootstrap_coverage.unwrap_or(f64::NAN),
            mean_width: b.bootstrap_mean_width.unwrap_or(f64::NAN),
        });
        rows.push(BaselineRow { method: "sharp", lambda, coverage: cell.coverage, mean_width: cell.mean_width });
        rows.push(BaselineRow {
            method: "worst_case",
            lambda,
            coverage: b.worst_case_coverage,
            mean_width: b.worst_case_mean_width,
        });
    }
    Ok((rows, sweep))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingRow {
    pub n_r: usize,
    pub coverage: f64,
    pub mean_width: f64,
    pub sharpness: f64,
    /// Mean wall time of one bounds computation, in seconds.
    pub bounds_seconds: f64,
}

/// Fixed-`Λ` sweeps over ascending trial sizes against one oracle width.
pub fn scaling_study(
    sim: &Simulator,
    n_r_list: &[usize],
    lambda: f64,
    base: &SweepConfig,
    n_big: usize,
) -> Result<Vec<ScalingRow>> {
    if n_r_list.windows(2).any(|w| w[1] < w[0]) {
        return Err(ExperimentError::Setting("trial sizes must be ascending".into()));
    }
    let oracle = oracle_width(sim, lambda, &base.weight_mode, n_big, base.seed.wrapping_add(ORACLE_SEED_OFFSET))?;
    n_r_list
        .iter()
        .map(|&n_r| {
            let cfg = SweepConfig { n_r, lambdas: vec![lambda], oracle_n_big: None, ..base.clone() };
            let sweep = run_sweep(sim, &cfg)?;
            let cell = sweep.cells[0];
            Ok(ScalingRow {
                n_r,
                coverage: cell.coverage,
                mean_width: cell.mean_width,
                sharpness: cell.mean_width / oracle,
                bounds_seconds: sweep.runtime.mean_bounds_seconds,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdVsEstRow {
    pub n_r: usize,
    pub bootstrap_coverage: f64,
    pub bootstrap_width: f64,
    pub cells: Vec<LambdaCell>,
}

/// Naive bootstrap against sharp bounds as the trial grows.
pub fn id_vs_est_study(sim: &Simulator, n_r_list: &[usize], base: &SweepConfig) -> Result<Vec<IdVsEstRow>> {
    if base.bootstrap_resamples.is_none() {
        return Err(ExperimentError::Setting("id-vs-est needs bootstrap_resamples".into()));
    }
    n_r_list
        .iter()
        .map(|&n_r| {
            let sweep = run_sweep(sim, &SweepConfig { n_r, ..base.clone() })?;
            Ok(IdVsEstRow {
                n_r,
                bootstrap_coverage: sweep.baselines.bootstrap_coverage.unwrap_or(f64::NAN),
                bootstrap_width: sweep.baselines.bootstrap_mean_width.unwrap_or(f64::NAN),
                cells: sweep.cells,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RobustnessRow {
    pub kind: DgpKind,
    pub true_tau: f64,
    pub cell: LambdaCell,
}

/// Coverage and width per design and `Λ`.
pub fn robustness_study(sims: &[Simulator], base: &SweepConfig) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::new();
    for sim in sims {
        let sweep = run_sweep(sim, base)?;
        rows.extend(sweep.cells.iter().map(|&cell| RobustnessRow {
            kind: sim.spec().kind,
            true_tau: sweep.true_tau,
            cell,
        }));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightStrategyRow {
    pub strategy: String,
    pub cell: LambdaCell,
    pub mean_ess: f64,
    pub median_max_weight: f64,
    pub clamped: usize,
}

/// Oracle weights, a membership model on all covariates and one on `X₁` only.
pub fn weight_sensitivity_study(sim: &Simulator, base: &SweepConfig) -> Result<Vec<WeightStrategyRow>> {
    if sim.spec().kind != DgpKind::Linear {
        return Err(ExperimentError::Setting("weight study needs the linear design".into()));
    }
    let strategies = [WeightMode::Oracle, WeightMode::Fitted, WeightMode::FittedSubset(vec![1])];
    let mut rows = Vec::new();
    for mode in strategies {
        let sweep = run_sweep(sim, &SweepConfig { weight_mode: mode.clone(), ..base.clone() })?;
        let mut max_weights: Vec<f64> = sweep.replications.iter().map(|r| r.diagnostics.max_weight).collect();
        max_weights.sort_by(f64::total_cmp);
        let median_max_weight = transport_bounds::special::sorted_quantile(&max_weights, 0.5);
        let clamped = sweep.replications.iter().map(|r| r.diagnostics.clamped_count).sum();
        rows.extend(sweep.cells.iter().map(|&cell| WeightStrategyRow {
            strategy: mode.name(),
            cell,
            mean_ess: sweep.mean_ess,
            median_max_weight,
            clamped,
        }));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierSnapshot {
    pub arm: Arm,
    pub direction: Direction,
    pub outcomes: Vec<f64>,
    pub probs: Vec<f64>,
    pub multipliers: Multipliers,
}

/// Optimal multipliers of one draw for both arms and both directions.
pub fn bangbang_snapshot(
    sim: &Simulator,
    n_r: usize,
    n_o: usize,
    lambda: f64,
    mode: &WeightMode,
    seed: u64,
) -> Result<Vec<MultiplierSnapshot>> {
    let lambda = SensitivityParam::new(lambda)?;
    let draw = sim.draw(n_r, n_o, seed)?;
    let weighted = weigh(&draw, sim.spec(), mode)?;
    let pair = ArmPair::new(&draw.trial, &weighted.weights)?;
    let mut out = Vec::new();
    for arm in [Arm::Treated, Arm::Control] {
        let dist = pair.arm(arm);
        for direction in [Direction::Upper, Direction::Lower] {
            let (_, multipliers) = greedy_arm_bound(dist, lambda, direction);
            if multipliers.interior_count() > 1 {
                return Err(ExperimentError::Invariant(format!(
                    "{} interior multipliers for arm {arm}, {direction}",
                    multipliers.interior_count()
                )));
            }
            out.push(MultiplierSnapshot {
                arm,
                direction,
                outcomes: dist.outcomes().to_vec(),
                probs: dist.probs().to_vec(),
                multipliers,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear() -> Simulator {
        Simulator::new(DgpSpec::defaults(DgpKind::Linear)).unwrap()
    }

    #[test]
    fn wilson_matches_reference_values() {
        let (lo, hi) = wilson_interval(195, 200);
        assert!((lo - 0.94274).abs() < 1e-4 && (hi - 0.98928).abs() < 1e-4, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 200);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.018845).abs() < 1e-5);
    }

    #[test]
    fn grid_is_clean() {
        let g = lambda_grid(3.0, 0.1);
        assert_eq!(g.len(), 21);
        assert_eq!(g[4], 1.4);
        assert_eq!(g[20], 3.0);
    }

    #[test]
    fn weight_mode_round_trip() {
        for s in ["oracle", "fitted", "fitted:1,3"] {
            assert_eq!(s.parse::<WeightMode>().unwrap().name(), s);
        }
        assert!("uniform".parse::<WeightMode>().is_err());
    }

    #[test]
    fn breakeven_none_when_never_reached() {
        let sim = linear();
        let cfg = SweepConfig::new(200, 200, vec![1.0], 5, 3);
        let sweep = run_sweep(&sim, &cfg).unwrap();
        assert_eq!(breakeven_lambda(&sweep, 1.01), None);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let sim = linear();
        let mut cfg = SweepConfig::new(150, 150, vec![1.0, 1.5, 2.0], 12, 77);
        cfg.bootstrap_resamples = Some(50);
        let serial = run_sweep(&sim, &cfg).unwrap();
        cfg.workers = 4;
        let parallel = run_sweep(&sim, &cfg).unwrap();
        assert_eq!(serial.replications, parallel.replications);
        assert_eq!(serial.cells, parallel.cells);
        assert_eq!(serial.baselines, parallel.baselines);
    }

    #[test]
    fn coverage_is_monotone_per_replicate() {
        let sim = linear();
        let cfg = SweepConfig::new(300, 300, lambda_grid(2.0, 0.1), 20, 5);
        let sweep = run_sweep(&sim, &cfg).unwrap();
        for rep in &sweep.replications {
            assert!(rep.covered.windows(2).all(|w| !w[0] || w[1]));
        }
    }

    #[test]
    fn oracle_width_vanishes_at_one() {
        let w = oracle_width(&linear(), 1.0, &WeightMode::Oracle, 10_000, 1).unwrap();
        assert!(w.abs() < 1e-12);
        assert!(oracle_width(&linear(), 1.0, &WeightMode::Oracle, 100, 1).is_err());
    }

    #[test]
    fn snapshot_at_one_is_all_ones() {
        let snaps = bangbang_snapshot(&linear(), 200, 200, 1.0, &WeightMode::Oracle, 9).unwrap();
        assert_eq!(snaps.len(), 4);
        for s in snaps {
            assert!(s.multipliers.values.iter().all(|&v| v == 1.0));
        }
    }
}
