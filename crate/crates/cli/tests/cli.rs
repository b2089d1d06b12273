use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use transport_bounds::bounds::ArmPair;
use transport_bounds::dgp::{DgpKind, DgpSpec, Simulator};
use transport_bounds::weights::{fit_membership, inverse_odds_weights, FitConfig};
use transport_bounds::SensitivityParam;
use transport_bounds_cli::csvio;

fn tbounds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tbounds"))
        .args(args)
        .env_remove("TB_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Simulates linear-design files into `dir` and returns (trial, target, truth).
fn simulate(dir: &Path, seed: u64, n_r: usize) -> (PathBuf, PathBuf, PathBuf) {
    let prefix = dir.join("sim");
    let out = tbounds(&[
        "simulate",
        "--n-r",
        &n_r.to_string(),
        "--n-o",
        "800",
        "--seed",
        &seed.to_string(),
        "--out-prefix",
        path_str(&prefix),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    (dir.join("sim_trial.csv"), dir.join("sim_target.csv"), dir.join("sim_truth.json"))
}

fn bounds_json(trial: &Path, target: &Path, lambda: &str) -> serde_json::Value {
    let out = tbounds(&["bounds", "--trial", path_str(trial), "--target", path_str(target), "--lambda", lambda]);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_str(&stdout(&out)).unwrap()
}

#[test]
fn simulate_writes_truth_and_is_reproducible() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let (ta, ga, ja) = simulate(a.path(), 11, 300);
    let (tb, gb, jb) = simulate(b.path(), 11, 300);
    let truth: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ja).unwrap()).unwrap();
    assert_eq!(truth["true_tau"].as_f64(), Some(2.25));
    assert_eq!(truth["seed"].as_u64(), Some(11));
    assert_eq!(truth["spec"]["kind"], "linear");
    for (x, y) in [(ta, tb), (ga, gb), (ja, jb)] {
        assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
    }
}

#[test]
fn seed_env_overrides_flag() {
    let a = TempDir::new().unwrap();
    let prefix = a.path().join("e");
    let out = Command::new(env!("CARGO_BIN_EXE_tbounds"))
        .args(["simulate", "--n-r", "50", "--n-o", "50", "--seed", "1", "--out-prefix", path_str(&prefix)])
        .env("TB_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let truth: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.path().join("e_truth.json")).unwrap()).unwrap();
    assert_eq!(truth["seed"].as_u64(), Some(99));
}

#[test]
fn bad_config_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.cfg");
    let prefix = dir.path().join("x");
    fs::write(&cfg, "kind = dgp9\n").unwrap();
    let out = tbounds(&["simulate", "--config", path_str(&cfg), "--out-prefix", path_str(&prefix)]);
    assert_eq!(out.status.code(), Some(2));
    fs::write(&cfg, "kind = linear\ngamma_oo = 1\n").unwrap();
    let out = tbounds(&["simulate", "--config", path_str(&cfg), "--out-prefix", path_str(&prefix)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("gamma_oo"), "{}", stderr(&out));
}

#[test]
fn bounds_at_one_is_the_point_estimate() {
    let dir = TempDir::new().unwrap();
    let (trial, target, _) = simulate(dir.path(), 4, 400);
    let v = bounds_json(&trial, &target, "1");
    let (lo, hi, naive) = (v["lower"].as_f64().unwrap(), v["upper"].as_f64().unwrap(), v["naive_point"].as_f64().unwrap());
    assert!((lo - naive).abs() < 1e-12 && (hi - naive).abs() < 1e-12, "{lo} {hi} {naive}");
    assert_eq!(v["n_r"].as_u64(), Some(400));
    assert_eq!(v["n_o"].as_u64(), Some(800));
    let keys: Vec<&String> = v.as_object().unwrap().keys().collect();
    assert_eq!(keys.len(), 8);
    assert!(v["ess"].as_f64().unwrap() > 0.0);
}

#[test]
fn bounds_json_fields_are_in_fixed_order() {
    let dir = TempDir::new().unwrap();
    let (trial, target, _) = simulate(dir.path(), 4, 200);
    let out = tbounds(&["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "2"]);
    let text = stdout(&out);
    let order = ["lambda", "lower", "upper", "width", "naive_point", "n_r", "n_o", "ess"];
    let positions: Vec<usize> = order.iter().map(|k| text.find(&format!("\"{k}\"")).unwrap()).collect();
    assert!(positions.windows(2).all(|w| w[0] < w[1]), "{text}");
}

#[test]
fn lambda_below_one_is_rejected() {
    let dir = TempDir::new().unwrap();
    let (trial, target, _) = simulate(dir.path(), 4, 100);
    let out = tbounds(&["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "0.5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("lambda must be >= 1"), "{}", stderr(&out));
}

#[test]
fn missing_outcome_column_names_it() {
    let dir = TempDir::new().unwrap();
    let trial = dir.path().join("t.csv");
    let target = dir.path().join("o.csv");
    fs::write(&trial, "x1,a\n0.1,1\n0.2,-1\n").unwrap();
    fs::write(&target, "x1\n0.3\n0.4\n").unwrap();
    let out = tbounds(&["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'y'"), "{}", stderr(&out));
}

#[test]
fn parse_error_reports_line() {
    let dir = TempDir::new().unwrap();
    let trial = dir.path().join("t.csv");
    let target = dir.path().join("o.csv");
    fs::write(&trial, "x1,a,y\n0.1,1,2.0\n0.2,-1,oops\n").unwrap();
    fs::write(&target, "x1\n0.3\n").unwrap();
    let out = tbounds(&["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn empty_arm_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let trial = dir.path().join("t.csv");
    let target = dir.path().join("o.csv");
    fs::write(&trial, "x1,a,y\n0.1,1,2.0\n0.2,1,1.0\n").unwrap();
    fs::write(&target, "x1\n0.3\n0.1\n").unwrap();
    let out = tbounds(&["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(4), "{}", stderr(&out));
}

#[test]
fn separated_samples_are_a_fit_failure() {
    let dir = TempDir::new().unwrap();
    let trial = dir.path().join("t.csv");
    let target = dir.path().join("o.csv");
    fs::write(&trial, "x1,a,y\n-1,1,2.0\n-2,-1,1.0\n-3,1,0.5\n-4,-1,0.0\n").unwrap();
    fs::write(&target, "x1\n1\n2\n3\n4\n").unwrap();
    let out = tbounds(&["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", stderr(&out));
}

#[test]
fn binary_arm_flag() {
    let dir = TempDir::new().unwrap();
    let trial = dir.path().join("t.csv");
    let target = dir.path().join("o.csv");
    fs::write(&trial, "x1,a,y\n0.1,1,2.0\n0.2,0,1.0\n0.3,1,3.0\n0.5,0,0.0\n").unwrap();
    fs::write(&target, "x1\n0.3\n0.1\n").unwrap();
    let base = ["bounds", "--trial", path_str(&trial), "--target", path_str(&target), "--lambda", "1"];
    assert_eq!(tbounds(&base).status.code(), Some(2));
    let mut with_flag = base.to_vec();
    with_flag.extend(["--binary-arm", "--weight-mode", "uniform"]);
    let out = tbounds(&with_flag);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!((v["naive_point"].as_f64().unwrap() - 2.0).abs() < 1e-12);
}

fn envelope_rows(trial: &Path, target: &Path, lo: &str, hi: &str, points: &str) -> Vec<Vec<f64>> {
    let out = tbounds(&[
        "envelope",
        "--trial",
        path_str(trial),
        "--target",
        path_str(target),
        "--lambda-min",
        lo,
        "--lambda-max",
        hi,
        "--grid-points",
        points,
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("lambda,lower,upper,width"));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn envelope_degenerate_grid_and_nesting() {
    let dir = TempDir::new().unwrap();
    let (trial, target, _) = simulate(dir.path(), 8, 300);
    let rows = envelope_rows(&trial, &target, "1", "1", "2");
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
    let rows = envelope_rows(&trial, &target, "1", "4", "12");
    assert!(rows.windows(2).all(|w| w[0][3] <= w[1][3]));
    // Geometric spacing: constant ratio between neighbours.
    let ratio = rows[1][0] / rows[0][0];
    assert!(rows.windows(2).all(|w| (w[1][0] / w[0][0] - ratio).abs() < 1e-12));
}

#[test]
fn envelope_matches_library_bit_exactly() {
    let dir = TempDir::new().unwrap();
    let (trial_path, target_path, _) = simulate(dir.path(), 21, 500);
    let rows = envelope_rows(&trial_path, &target_path, "1", "3", "4");

    let (trial, target) = csvio::read_pair(&trial_path, &target_path, false, 0.5).unwrap();
    let trial_x: Vec<&[f64]> = trial.covariates().collect();
    let target_x: Vec<&[f64]> = target.rows().iter().map(Vec::as_slice).collect();
    let model = fit_membership(&trial_x, &target_x, &FitConfig::default()).unwrap();
    let w = inverse_odds_weights(&model, &trial_x).weights;
    let grid = transport_bounds_cli::app::geometric_grid(1.0, 3.0, 4).unwrap();
    let env = ArmPair::new(&trial, &w).unwrap().envelope(&grid).unwrap();
    for (row, (l, i)) in rows.iter().zip(env.lambdas.iter().zip(&env.intervals)) {
        assert_eq!(row[0].to_bits(), l.to_bits());
        assert_eq!(row[1].to_bits(), i.lower.to_bits());
        assert_eq!(row[2].to_bits(), i.upper.to_bits());
    }
}

#[test]
fn csv_round_trip_matches_in_memory_pipeline() {
    let dir = TempDir::new().unwrap();
    let (trial_path, target_path, _) = simulate(dir.path(), 31, 600);
    let file_bounds = bounds_json(&trial_path, &target_path, "1.7");

    let sim = Simulator::new(DgpSpec::defaults(DgpKind::Linear)).unwrap();
    let draw = sim.draw(600, 800, 31).unwrap();
    let model = fit_membership(&draw.trial_rows(), &draw.target_rows(), &FitConfig::default()).unwrap();
    let w = inverse_odds_weights(&model, &draw.trial_rows()).weights;
    let b = ArmPair::new(&draw.trial, &w).unwrap().ate_bounds(SensitivityParam::new(1.7).unwrap());
    assert!((file_bounds["lower"].as_f64().unwrap() - b.lower).abs() < 1e-12);
    assert!((file_bounds["upper"].as_f64().unwrap() - b.upper).abs() < 1e-12);
}

#[test]
fn unknown_experiment_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let out = tbounds(&["experiment", "exp9", "--out-dir", path_str(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("exp9"));
}

#[test]
fn bangbang_output_has_at_most_one_interior_value() {
    let dir = TempDir::new().unwrap();
    let out = tbounds(&["experiment", "bangbang", "--seed", "5", "--out-dir", path_str(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("bangbang.csv")).unwrap();
    let lambda: f64 = 2.0;
    let mut groups: std::collections::BTreeMap<(String, String), (usize, usize)> = Default::default();
    for line in text.lines().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        let m: f64 = f[5].parse().unwrap();
        let entry = groups.entry((f[0].into(), f[1].into())).or_default();
        entry.0 += 1;
        if m > 1.0 / lambda + 1e-12 && m < lambda - 1e-12 {
            entry.1 += 1;
        }
    }
    assert_eq!(groups.len(), 4);
    for (key, (count, interior)) in groups {
        assert!(count > 100, "{key:?}");
        assert!(interior <= 1, "{key:?} has {interior} interior multipliers");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["experiment"], "bangbang");
    assert_eq!(manifest["seed"].as_u64(), Some(5));
}

#[test]
fn sweep_experiment_writes_tables() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("sweep.cfg");
    fs::write(&cfg, "replicates = 200\nlambdas = 1.0, 1.4, 2.0\nn_big = 20000\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = tbounds(&[
        "experiment",
        "sweep",
        "--config",
        path_str(&cfg),
        "--seed",
        "3",
        "--workers",
        "2",
        "--out-dir",
        path_str(&out_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(out_dir.join("sweep_coverage.csv")).unwrap();
    let last: Vec<f64> = text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
    assert!(last[1] >= 0.99, "coverage at 2.0 was {}", last[1]);
    let mins = fs::read_to_string(out_dir.join("sweep_lambda_min.csv")).unwrap();
    assert_eq!(mins.lines().count(), 201);
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn breakeven_experiment_at_quarter_shift() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("be.cfg");
    fs::write(&cfg, "gamma_o_list = 0.25\nlambda_max = 2.0\n").unwrap();
    let out = tbounds(&[
        "experiment",
        "breakeven",
        "--config",
        path_str(&cfg),
        "--seed",
        "2024",
        "--workers",
        "4",
        "--out-dir",
        path_str(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("breakeven.csv")).unwrap();
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let breakeven: f64 = row[1].parse().unwrap();
    assert!((breakeven - 1.4).abs() <= 0.1 + 1e-9, "breakeven {breakeven}");
}
