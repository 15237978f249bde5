use std::path::Path;
use std::process::Command;

use matstruct_cli::scenario::SweepSection;
use matstruct_cli::{simulate, sweep, Context, Scenario};

fn ctx(scenario: Scenario, dir: &Path) -> Context {
    Context::new(scenario, Some(dir.to_path_buf()), None, None).unwrap()
}

fn coarse(mut s: Scenario) -> Scenario {
    s.grid.maturity_nodes = 60;
    s.grid.smallest_cell = 1e-3;
    s.grid.steps_per_delay = 10;
    s
}

#[test]
fn trivial_preset_writes_zeros() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(&ctx(Scenario::preset("trivial").unwrap(), dir.path())).unwrap();
    assert!(d.trivial_equilibrium);
    let csv = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,m,N,P"));
    for line in lines {
        let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
        assert_eq!((cols[2], cols[3]), (0.0, 0.0));
    }
    assert!(dir.path().join("diagnostics.json").exists());
}

#[test]
fn linear_stable_is_certified_and_decays_inside_the_envelope() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(&ctx(Scenario::preset("linear_stable").unwrap(), dir.path())).unwrap();
    assert!(d.certificate.local);
    assert!((d.certificate.margin - 0.05).abs() < 1e-15);
    assert!(d.envelope_asserted);
    assert_eq!(d.envelope_pass, Some(true));
    assert!(d.positivity.passed);
}

#[test]
fn strong_feedback_runs_without_envelope_assertion() {
    let dir = tempfile::tempdir().unwrap();
    let d = simulate(&ctx(Scenario::preset("beta0_006").unwrap(), dir.path())).unwrap();
    assert!(!d.certificate.local);
    assert!(!d.envelope_asserted);
    let fit = d.decay.expect("decay fit reported");
    assert!(fit.envelope.is_none());
    assert!(fit.rate.is_finite());
}

#[test]
fn beta0_sweep_follows_certificate_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = coarse(Scenario::preset("linear_stable").unwrap());
    let axis = vec![0.01, 0.02, 0.03, 0.04, 0.05, 0.06];
    s.sweep = Some(SweepSection {
        beta0: Some(axis.clone()),
        horizon: Some(4.0),
        ..Default::default()
    });
    let rows = sweep(&ctx(s, dir.path())).unwrap();
    assert_eq!(rows.len(), axis.len());
    for (row, b) in rows.iter().zip(&axis) {
        assert_eq!(row.beta0, *b);
        assert_eq!(row.verdict, Some(5.0 * b < 0.25), "β₀ = {b}");
        assert_eq!(row.agreement, Some(true));
        assert!(row.error.is_none());
    }
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), axis.len() + 1);
    for i in 0..axis.len() {
        assert!(dir.path().join(format!("sweep/point_{i:05}.csv")).exists());
    }
}

#[test]
fn empty_axis_gives_empty_table() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Scenario::preset("linear_stable").unwrap();
    s.sweep = Some(SweepSection {
        beta0: Some(vec![]),
        ..Default::default()
    });
    assert!(sweep(&ctx(s, dir.path())).unwrap().is_empty());
    let table = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 1);
}

#[test]
fn failed_sweep_points_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = coarse(Scenario::preset("linear_stable").unwrap());
    s.sweep = Some(SweepSection {
        alpha: Some(vec![-1.0, 0.2]),
        horizon: Some(2.0),
        ..Default::default()
    });
    let rows = sweep(&ctx(s, dir.path())).unwrap();
    assert!(rows[0].error.is_some());
    assert!(rows[1].error.is_none());
}

fn binary() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matstruct"))
}

#[test]
fn binary_reports_errors_with_nonzero_status() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("bad.toml");
    std::fs::write(&scenario, "").unwrap();
    let out = binary()
        .args(["validate", "--scenario"])
        .arg(&scenario)
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"kind\":\"missing_keys\""), "{err}");
    let record = std::fs::read_to_string(dir.path().join("error.json")).unwrap();
    assert!(record.contains("missing_keys"));
}

#[test]
fn binary_honours_output_directory_variable() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary()
        .args(["dump-maps", "--preset", "linear_stable"])
        .env("MATSTRUCT_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let maps = std::fs::read_to_string(dir.path().join("maps.csv")).unwrap();
    assert!(maps.starts_with("m,theta,delta,"));
}

#[test]
fn binary_horizon_override_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let out = binary()
        .args(["simulate", "--preset", "trivial", "--horizon", "-1"])
        .arg("--out")
        .arg(dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.horizon"));
}
