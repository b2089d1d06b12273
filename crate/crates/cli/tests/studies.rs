use transport_bounds::dgp::{DgpKind, DgpSpec, Simulator};
use transport_bounds_cli::experiments::{
    self as ex, lambda_grid, oracle_width, run_sweep, SweepConfig, WeightMode,
};

const SEED: u64 = 20_240_601;

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn config(n_r: usize, lambdas: Vec<f64>, replicates: usize) -> SweepConfig {
    let mut cfg = SweepConfig::new(n_r, 1000, lambdas, replicates, SEED);
    cfg.workers = workers();
    cfg
}

fn sim(kind: DgpKind) -> Simulator {
    Simulator::new(DgpSpec::defaults(kind)).unwrap()
}

#[test]
fn scaling_widths_stabilize_and_calls_are_fast() {
    let rows = ex::scaling_study(&sim(DgpKind::Linear), &[500, 2000, 5000], 2.0, &config(500, vec![2.0], 200), 100_000)
        .unwrap();
    let (w2000, w5000) = (rows[1].mean_width, rows[2].mean_width);
    assert!((w5000 - w2000).abs() < 0.1, "{w2000} vs {w5000}");
    assert!(rows[2].bounds_seconds < 0.010, "{} s per call", rows[2].bounds_seconds);
    assert!(rows[0].sharpness < rows[2].sharpness || (rows[2].sharpness - 1.0).abs() < 0.01, "{rows:?}");
}

#[test]
fn sharp_width_at_large_trial_is_near_oracle() {
    let s = sim(DgpKind::Linear);
    let mut cfg = config(5000, vec![2.0], 100);
    cfg.bootstrap_resamples = Some(200);
    let rows = ex::id_vs_est_study(&s, &[5000], &cfg).unwrap();
    let oracle = oracle_width(&s, 2.0, &WeightMode::Oracle, 100_000, SEED).unwrap();
    let width = rows[0].cells[0].mean_width;
    assert!((width / oracle - 1.0).abs() < 0.05, "{width} vs {oracle}");
}

#[test]
fn heavy_tail_coverage_at_one_and_a_half() {
    let rows = ex::robustness_study(&[sim(DgpKind::HeavyTail)], &config(500, vec![1.5], 200)).unwrap();
    let c = rows[0].cell.coverage;
    assert!((0.96..=1.0).contains(&c), "{c}");
}

#[test]
fn binary_and_nonlinear_widths() {
    let rows =
        ex::robustness_study(&[sim(DgpKind::Binary), sim(DgpKind::Nonlinear)], &config(500, vec![2.0], 200)).unwrap();
    assert!((rows[0].cell.mean_width - 0.977).abs() <= 0.05, "{:?}", rows[0]);
    assert!(rows[0].cell.coverage >= 0.99);
    assert!((rows[1].cell.mean_width - 4.260).abs() <= 0.3, "{:?}", rows[1]);
}

#[test]
fn fitted_weights_track_oracle_weights() {
    let rows = ex::weight_sensitivity_study(&sim(DgpKind::Linear), &config(500, vec![2.0], 200)).unwrap();
    let by = |name: &str| rows.iter().find(|r| r.strategy == name).unwrap();
    let (oracle, fitted, x1_only) = (by("oracle"), by("fitted"), by("fitted:1"));
    assert!((fitted.cell.mean_width - oracle.cell.mean_width).abs() < 0.3);
    assert!(x1_only.cell.coverage >= 0.9, "{:?}", x1_only);
    for r in &rows {
        assert!(r.mean_ess > 0.0 && r.mean_ess <= 500.0);
    }
}

#[test]
fn sharpness_and_tipping_points() {
    let mut cfg = config(500, lambda_grid(3.0, 0.1), 200);
    cfg.oracle_n_big = Some(100_000);
    let s = run_sweep(&sim(DgpKind::Linear), &cfg).unwrap();
    for cell in s.cells.iter().filter(|c| c.lambda > 1.0) {
        let sharp = cell.sharpness.unwrap();
        assert!(sharp > 0.0 && sharp <= 1.02, "lambda {} sharpness {sharp}", cell.lambda);
    }
    let in_band = s.lambda_mins().filter(|m| m.is_some_and(|m| (1.1 - 1e-9..=1.3 + 1e-9).contains(&m))).count();
    assert!(in_band as f64 >= 0.6 * 200.0, "{in_band} of 200 in [1.1, 1.3]");
    assert!(s.cells.windows(2).all(|w| w[0].coverage <= w[1].coverage));
    for c in &s.cells {
        assert!(c.wilson_lower <= c.coverage && c.coverage <= c.wilson_upper);
    }
}

#[test]
fn bangbang_snapshot_has_one_interior_value_each() {
    let snaps = ex::bangbang_snapshot(&sim(DgpKind::Linear), 500, 1000, 2.0, &WeightMode::Oracle, SEED).unwrap();
    for s in &snaps {
        assert_eq!(s.multipliers.interior_count(), 1);
    }
    let upper = snaps.iter().find(|s| s.direction == transport_bounds::Direction::Upper).unwrap();
    assert!(upper.multipliers.values.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn failed_replicate_reports_its_seed() {
    // Perfectly separated covariates make the membership fit fail.
    let spec = DgpSpec { mu_shift: 40.0, ..DgpSpec::defaults(DgpKind::Linear) };
    let s = Simulator::with_truth(spec, 0.0).unwrap();
    let mut cfg = config(100, vec![1.0], 3);
    cfg.weight_mode = WeightMode::Fitted;
    let err = run_sweep(&s, &cfg).unwrap_err();
    assert!(err.to_string().contains(&format!("seed {SEED}")), "{err}");
}
