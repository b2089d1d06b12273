//! Subcommands of `tbounds` and their exit codes.
//!
//! Exit codes: 0 success, 2 usage or parse error, 3 numerical or model-fit
//! failure, 4 data failure (for example an empty treatment arm). When the
//! `TB_SEED` environment variable is set it takes precedence over `--seed`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use transport_bounds::dgp::{DgpKind, DgpSpec, Simulator};
use transport_bounds::weights::{fit_membership, inverse_odds_weights, weight_diagnostics, FitConfig};
use transport_bounds::{
    baselines::naive_point_estimate, bounds::ArmPair, Error as CoreError, SensitivityParam,
    TargetCovariates, TrialDataset,
};

use crate::config::{Config, ConfigError, DGP_KEYS, EXPERIMENT_KEYS};
use crate::csvio::{self, CsvError};
use crate::experiments::{self as ex, ExperimentError, SweepConfig, WeightMode};
use crate::json::{self, object, Value};

pub const SEED_ENV: &str = "TB_SEED";
pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "tbounds", version, about = "Sharp bounds on a transported average treatment effect")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DataWeights {
    /// Inverse-odds weights from a logistic membership model.
    Fitted,
    /// Every trial unit weighted equally.
    Uniform,
}

#[derive(Debug, clap::Args)]
pub struct DataArgs {
    /// Trial CSV with header x1,...,xp,a,y.
    #[arg(long)]
    pub trial: PathBuf,
    /// Target CSV with header x1,...,xp.
    #[arg(long)]
    pub target: PathBuf,
    #[arg(long, value_enum, default_value_t = DataWeights::Fitted)]
    pub weight_mode: DataWeights,
    /// 1-based covariates used by the membership model, e.g. 1,3.
    #[arg(long, value_delimiter = ',')]
    pub features: Option<Vec<usize>>,
    /// Read the arm column as 0/1 instead of -1/1.
    #[arg(long)]
    pub binary_arm: bool,
    /// Trial randomization probability.
    #[arg(long, default_value_t = 0.5)]
    pub pi_r: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bounds at one sensitivity level, as JSON.
    Bounds {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        lambda: f64,
    },
    /// Bounds over a geometric grid of sensitivity levels, as CSV.
    Envelope {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, default_value_t = 1.0)]
        lambda_min: f64,
        #[arg(long, default_value_t = 3.0)]
        lambda_max: f64,
        #[arg(long, default_value_t = 21)]
        grid_points: usize,
    },
    /// Simulate a trial and target sample with its true effect.
    Simulate {
        /// DGP config file (key = value); linear defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 500)]
        n_r: usize,
        #[arg(long, default_value_t = 1000)]
        n_o: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Writes <prefix>_trial.csv, <prefix>_target.csv and <prefix>_truth.json.
        #[arg(long)]
        out_prefix: PathBuf,
    },
    /// Run a simulation study and write its tables.
    Experiment {
        /// sweep, breakeven, baselines, scaling, robustness, weights, id-vs-est or bangbang.
        name: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Numerical(String),
    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Data(_) => 4,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        use CoreError::*;
        let msg = e.to_string();
        match e {
            InvalidLambda(_) | InvalidParameter(_) | InvalidFeature(_) | GridNotAscending
            | UnsupportedKind(_) | InvalidArm(_) => CliError::Usage(msg),
            Separation(_) | SingularHessian | NoFeasibleThreshold | NotNested(_) | RejectionStall(_)
            | DegenerateResample(_) => CliError::Numerical(msg),
            _ => CliError::Data(msg),
        }
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        match e {
            CsvError::Data(core) => core.into(),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        let msg = e.to_string();
        match e {
            ExperimentError::Replicate { source, .. } => match CliError::from(source) {
                CliError::Usage(_) => CliError::Usage(msg),
                CliError::Numerical(_) => CliError::Numerical(msg),
                CliError::Data(_) => CliError::Data(msg),
            },
            ExperimentError::Core(core) => core.into(),
            ExperimentError::Setting(_) => CliError::Usage(msg),
            ExperimentError::Invariant(_) | ExperimentError::Pool(_) => CliError::Numerical(msg),
        }
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("{SEED_ENV} must be an unsigned integer (got '{v}')"))),
        Err(_) => Ok(flag.unwrap_or(DEFAULT_SEED)),
    }
}

fn read_config(path: Option<&Path>, allowed: &[&[&str]]) -> Result<Config, CliError> {
    match path {
        None => Ok(Config::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            Ok(Config::parse(&text, allowed)?)
        }
    }
}

struct Prepared {
    trial: TrialDataset,
    target: TargetCovariates,
    weights: Vec<f64>,
}

fn prepare(data: &DataArgs) -> Result<Prepared, CliError> {
    let (trial, target) = csvio::read_pair(&data.trial, &data.target, data.binary_arm, data.pi_r)?;
    let weights = match data.weight_mode {
        DataWeights::Uniform => vec![1.0; trial.len()],
        DataWeights::Fitted => {
            let config = match &data.features {
                Some(f) => FitConfig::with_features(f.clone()),
                None => FitConfig::default(),
            };
            let trial_x: Vec<&[f64]> = trial.covariates().collect();
            let target_x: Vec<&[f64]> = target.rows().iter().map(Vec::as_slice).collect();
            let model = fit_membership(&trial_x, &target_x, &config)?;
            inverse_odds_weights(&model, &trial_x).weights
        }
    };
    Ok(Prepared { trial, target, weights })
}

/// Geometric grid from `min` to `max` with `points` values; both ends are
/// exact.
pub fn geometric_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>, CliError> {
    SensitivityParam::new(min)?;
    SensitivityParam::new(max)?;
    if points < 2 {
        return Err(CliError::Usage("grid_points must be at least 2".into()));
    }
    if max < min {
        return Err(CliError::Usage("lambda_max must not be below lambda_min".into()));
    }
    let ratio = max / min;
    let last = points - 1;
    Ok((0..points)
        .map(|i| match i {
            0 => min,
            i if i == last => max,
            i => min * ratio.powf(i as f64 / last as f64),
        })
        .collect())
}

pub fn cmd_bounds(data: &DataArgs, lambda: f64) -> Result<String, CliError> {
    let lambda = SensitivityParam::new(lambda)?;
    let prep = prepare(data)?;
    let interval = ArmPair::new(&prep.trial, &prep.weights)?.ate_bounds(lambda);
    let naive = naive_point_estimate(&prep.trial, &prep.weights)?;
    let ess = weight_diagnostics(&prep.weights, 0).effective_sample_size;
    let doc = object([
        ("lambda", lambda.value().into()),
        ("lower", interval.lower.into()),
        ("upper", interval.upper.into()),
        ("width", interval.width().into()),
        ("naive_point", naive.into()),
        ("n_r", prep.trial.len().into()),
        ("n_o", prep.target.n_o().into()),
        ("ess", ess.into()),
    ]);
    Ok(json::to_string(&doc))
}

pub fn cmd_envelope(data: &DataArgs, lambda_min: f64, lambda_max: f64, points: usize) -> Result<String, CliError> {
    let grid = geometric_grid(lambda_min, lambda_max, points)?;
    let prep = prepare(data)?;
    let env = ArmPair::new(&prep.trial, &prep.weights)?.envelope(&grid)?;
    let mut out = String::from("lambda,lower,upper,width\n");
    for (l, i) in env.lambdas.iter().zip(&env.intervals) {
        let _ = writeln!(out, "{l},{},{},{}", i.lower, i.upper, i.width());
    }
    Ok(out)
}

pub fn spec_json(spec: &DgpSpec) -> Value {
    let bounds = spec.bounds.map_or(Value::Null, |b| {
        object([("cov_box", b.cov_box.into()), ("y_lower", b.y_lower.into()), ("y_upper", b.y_upper.into())])
    });
    object([
        ("kind", spec.kind.name().into()),
        ("p", spec.p.into()),
        ("mu_shift", spec.mu_shift.into()),
        ("gamma_r", spec.gamma_r.into()),
        ("gamma_o", spec.gamma_o.into()),
        ("beta0", spec.beta0.into()),
        ("beta_x", spec.beta_x.clone().into()),
        ("tau0", spec.tau0.into()),
        ("beta_u", spec.beta_u.into()),
        ("sigma", spec.sigma.into()),
        ("bounds", bounds),
    ])
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_os_string();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn cmd_simulate(
    config: Option<&Path>,
    n_r: usize,
    n_o: usize,
    seed: Option<u64>,
    out_prefix: &Path,
) -> Result<Vec<PathBuf>, CliError> {
    let seed = resolve_seed(seed)?;
    let spec = read_config(config, &[DGP_KEYS])?.dgp_spec()?;
    let draw = Simulator::new(spec.clone())?.draw(n_r, n_o, seed)?;
    let paths = [
        with_suffix(out_prefix, "_trial.csv"),
        with_suffix(out_prefix, "_target.csv"),
        with_suffix(out_prefix, "_truth.json"),
    ];
    let mut buf = Vec::new();
    csvio::write_trial(&mut buf, &draw.trial).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&paths[0], &buf)?;
    buf.clear();
    csvio::write_target(&mut buf, &draw.target).map_err(|e| CliError::Data(e.to_string()))?;
    write_file(&paths[1], &buf)?;
    let truth = object([
        ("true_tau", draw.true_tau.into()),
        ("spec", spec_json(&spec)),
        ("seed", seed.into()),
        ("n_r", n_r.into()),
        ("n_o", n_o.into()),
    ]);
    write_file(&paths[2], json::to_string(&truth).as_bytes())?;
    Ok(paths.to_vec())
}

pub const EXPERIMENTS: &[&str] =
    &["sweep", "breakeven", "baselines", "scaling", "robustness", "weights", "id-vs-est", "bangbang"];

/// One output table: file name and CSV text.
type Table = (String, String);

fn csv_table(name: &str, header: &str, rows: impl IntoIterator<Item = String>) -> Table {
    let mut text = format!("{header}\n");
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    (name.to_string(), text)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".into(), |v| v.to_string())
}

fn cells_rows<'a>(prefix: &'a str, cells: &'a [ex::LambdaCell]) -> impl Iterator<Item = String> + 'a {
    cells.iter().map(move |c| {
        format!(
            "{prefix}{},{},{},{},{},{},{}",
            c.lambda,
            c.coverage,
            c.wilson_lower,
            c.wilson_upper,
            c.mean_width,
            opt(c.oracle_width),
            opt(c.sharpness)
        )
    })
}

const CELL_HEADER: &str = "lambda,coverage,wilson_lower,wilson_upper,mean_width,oracle_width,sharpness";

/// Settings shared by every experiment, read from the config file.
struct Common {
    spec: DgpSpec,
    sweep: SweepConfig,
}

fn common(cfg: &Config, seed: u64, workers: usize, lambdas: Vec<f64>) -> Result<Common, CliError> {
    let spec = cfg.dgp_spec()?;
    let mut sweep = SweepConfig::new(
        cfg.get_or("n_r", 500)?,
        cfg.get_or("n_o", 1000)?,
        cfg.list_or("lambdas", lambdas)?,
        cfg.get_or("replicates", 200)?,
        seed,
    );
    sweep.weight_mode = cfg.get_or("weight_mode", WeightMode::Oracle)?;
    sweep.workers = workers;
    Ok(Common { spec, sweep })
}

fn default_grid(cfg: &Config) -> Result<Vec<f64>, CliError> {
    Ok(ex::lambda_grid(cfg.get_or("lambda_max", 3.0)?, cfg.get_or("lambda_step", 0.1)?))
}

fn run_experiment(name: &str, cfg: &Config, seed: u64, workers: usize) -> Result<Vec<Table>, CliError> {
    match name {
        "sweep" => {
            let mut c = common(cfg, seed, workers, default_grid(cfg)?)?;
            c.sweep.oracle_n_big = Some(cfg.get_or("n_big", 100_000)?);
            let sim = Simulator::new(c.spec)?;
            let s = ex::run_sweep(&sim, &c.sweep)?;
            let mins = s.replications.iter().map(|r| format!("{},{},{}", r.replicate_id, r.seed, opt(r.lambda_min)));
            Ok(vec![
                csv_table("sweep_coverage.csv", CELL_HEADER, cells_rows("", &s.cells)),
                csv_table("sweep_lambda_min.csv", "replicate,seed,lambda_min", mins),
            ])
        }
        "breakeven" => {
            let c = common(cfg, seed, workers, default_grid(cfg)?)?;
            let gammas = cfg.list_or("gamma_o_list", vec![0.25, 0.5, 0.75, 1.0])?;
            let rows = ex::breakeven_study(
                &c.spec,
                &gammas,
                &c.sweep,
                cfg.get_or("target_coverage", 0.95)?,
                cfg.get_or("alpha", 0.01)?,
            )?;
            let summary = rows.iter().map(|r| format!("{},{},{}", r.gamma_o, opt(r.breakeven), r.tail_trimmed));
            let curves: Vec<String> = rows
                .iter()
                .flat_map(|r| cells_rows("", &r.sweep.cells).map(move |line| format!("{},{line}", r.gamma_o)))
                .collect();
            Ok(vec![
                csv_table("breakeven.csv", "gamma_o,breakeven_lambda,tail_trimmed_lambda", summary),
                csv_table("breakeven_coverage.csv", &format!("gamma_o,{CELL_HEADER}"), curves),
            ])
        }
        "baselines" => {
            let mut c = common(cfg, seed, workers, vec![1.5, 2.0])?;
            c.sweep.bootstrap_resamples = Some(cfg.get_or("bootstrap_resamples", 200)?);
            let sim = Simulator::new(c.spec)?;
            let (rows, _) = ex::baselines_study(&sim, &c.sweep)?;
            let lines = rows.iter().map(|r| format!("{},{},{},{}", r.method, r.lambda, r.coverage, r.mean_width));
            Ok(vec![csv_table("baselines.csv", "method,lambda,coverage,mean_width", lines)])
        }
        "scaling" => {
            let c = common(cfg, seed, workers, vec![2.0])?;
            let sizes = cfg.list_or("n_r_list", vec![100, 200, 500, 1000, 2000, 5000])?;
            let sim = Simulator::new(c.spec)?;
            let rows =
                ex::scaling_study(&sim, &sizes, cfg.get_or("lambda", 2.0)?, &c.sweep, cfg.get_or("n_big", 100_000)?)?;
            let lines = rows.iter().map(|r| {
                format!("{},{},{},{},{}", r.n_r, r.coverage, r.mean_width, r.sharpness, r.bounds_seconds * 1e3)
            });
            Ok(vec![csv_table("scaling.csv", "n_r,coverage,mean_width,sharpness,bounds_ms", lines)])
        }
        "robustness" => {
            let c = common(cfg, seed, workers, vec![1.5, 2.0, 3.0])?;
            let kinds = cfg.list_or(
                "kinds",
                vec![DgpKind::Linear, DgpKind::Nonlinear, DgpKind::Binary, DgpKind::HeavyTail],
            )?;
            let sims = kinds
                .iter()
                .map(|&k| Simulator::new(DgpSpec { kind: k, ..DgpSpec::defaults(k) }))
                .collect::<Result<Vec<_>, _>>()?;
            let rows = ex::robustness_study(&sims, &c.sweep)?;
            let lines: Vec<String> = rows
                .iter()
                .flat_map(|r| {
                    let prefix = format!("{},{},", r.kind.name(), r.true_tau);
                    cells_rows("", std::slice::from_ref(&r.cell)).map(move |l| format!("{prefix}{l}")).collect::<Vec<_>>()
                })
                .collect();
            Ok(vec![csv_table("robustness.csv", &format!("kind,true_tau,{CELL_HEADER}"), lines)])
        }
        "weights" => {
            let c = common(cfg, seed, workers, vec![1.5, 2.0])?;
            let sim = Simulator::new(c.spec)?;
            let rows = ex::weight_sensitivity_study(&sim, &c.sweep)?;
            let lines = rows.iter().map(|r| {
                format!(
                    "{},{},{},{},{},{},{}",
                    r.strategy, r.cell.lambda, r.cell.coverage, r.cell.mean_width, r.mean_ess, r.median_max_weight, r.clamped
                )
            });
            Ok(vec![csv_table(
                "weights.csv",
                "strategy,lambda,coverage,mean_width,mean_ess,median_max_weight,clamped",
                lines,
            )])
        }
        "id-vs-est" => {
            let mut c = common(cfg, seed, workers, vec![1.5, 2.0])?;
            c.sweep.bootstrap_resamples = Some(cfg.get_or("bootstrap_resamples", 200)?);
            let sizes = cfg.list_or("n_r_list", vec![200, 1000, 5000])?;
            let sim = Simulator::new(c.spec)?;
            let rows = ex::id_vs_est_study(&sim, &sizes, &c.sweep)?;
            let mut lines = Vec::new();
            for r in &rows {
                lines.push(format!("{},bootstrap,none,{},{}", r.n_r, r.bootstrap_coverage, r.bootstrap_width));
                for cell in &r.cells {
                    lines.push(format!("{},sharp,{},{},{}", r.n_r, cell.lambda, cell.coverage, cell.mean_width));
                }
            }
            Ok(vec![csv_table("id_vs_est.csv", "n_r,method,lambda,coverage,mean_width", lines)])
        }
        "bangbang" => {
            let c = common(cfg, seed, workers, vec![2.0])?;
            let sim = Simulator::new(c.spec)?;
            let snaps = ex::bangbang_snapshot(
                &sim,
                c.sweep.n_r,
                c.sweep.n_o,
                cfg.get_or("lambda", 2.0)?,
                &c.sweep.weight_mode,
                seed,
            )?;
            let mut lines = Vec::new();
            for s in &snaps {
                for (j, ((y, p), m)) in s.outcomes.iter().zip(&s.probs).zip(&s.multipliers.values).enumerate() {
                    lines.push(format!("{},{},{j},{y},{p},{m}", s.arm, s.direction));
                }
            }
            Ok(vec![csv_table("bangbang.csv", "arm,direction,index,outcome,prob,multiplier", lines)])
        }
        other => Err(CliError::Usage(format!("unknown experiment '{other}'"))),
    }
}

pub fn cmd_experiment(
    name: &str,
    config: Option<&Path>,
    seed: Option<u64>,
    out_dir: &Path,
    workers: usize,
) -> Result<Vec<PathBuf>, CliError> {
    if !EXPERIMENTS.contains(&name) {
        return Err(CliError::Usage(format!(
            "unknown experiment '{name}' (expected one of: {})",
            EXPERIMENTS.join(", ")
        )));
    }
    let seed = resolve_seed(seed)?;
    let cfg = read_config(config, &[DGP_KEYS, EXPERIMENT_KEYS])?;
    let started = Instant::now();
    let tables = run_experiment(name, &cfg, seed, workers.max(1))?;
    let wall = started.elapsed().as_secs_f64();

    std::fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
    let mut written = Vec::new();
    for (file, text) in &tables {
        let path = out_dir.join(file);
        write_file(&path, text.as_bytes())?;
        written.push(path);
    }
    let settings = Value::Object(cfg.pairs().map(|(k, v)| (k.to_string(), v.into())).collect());
    let spec = cfg.dgp_spec()?;
    let manifest = object([
        ("experiment", name.into()),
        ("seed", seed.into()),
        ("workers", workers.max(1).into()),
        ("dgp", spec_json(&spec)),
        ("config", settings),
        ("wall_seconds", wall.into()),
        ("files", Value::Array(tables.iter().map(|(f, _)| f.as_str().into()).collect())),
    ]);
    let path = out_dir.join("manifest.json");
    write_file(&path, json::to_string(&manifest).as_bytes())?;
    written.push(path);
    Ok(written)
}

/// Runs a parsed command, printing its standard output.
pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Bounds { data, lambda } => print!("{}", cmd_bounds(&data, lambda)?),
        Command::Envelope { data, lambda_min, lambda_max, grid_points } => {
            print!("{}", cmd_envelope(&data, lambda_min, lambda_max, grid_points)?)
        }
        Command::Simulate { config, n_r, n_o, seed, out_prefix } => {
            for p in cmd_simulate(config.as_deref(), n_r, n_o, seed, &out_prefix)? {
                println!("{}", p.display());
            }
        }
        Command::Experiment { name, config, seed, out_dir, workers } => {
            for p in cmd_experiment(&name, config.as_deref(), seed, &out_dir, workers)? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}
