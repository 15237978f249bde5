mod common;

use common::*;
use matstruct_core::*;

#[test]
fn newborn_flux_matches_closed_form() {
    let c = canonical(0.0);
    let data = InitialData::new("incompatible", |m| 1.0 - m, |_, _| 0.3);
    let p = Problem::new(c, data).unwrap();
    let s = solve(&p, 3.0, &small_config()).unwrap();
    let mut worst = 0.0f64;
    for r in 0..s.n.rows() {
        let t = s.n.time(r);
        if t < 0.0 {
            continue;
        }
        for (j, &m) in s.n.maturities().iter().enumerate() {
            worst = worst.max((s.n.value(r, j) - no_feedback_exact(t, m, 0.3)).abs());
        }
    }
    assert!(worst < 1e-5, "{worst:e}");
    // the jump of the source at the seam is reported
    assert!(s.report.seam_jump > 0.1);
}

#[test]
fn oracle_agrees_with_closed_form() {
    let c = canonical(0.0);
    let data = InitialData::new("incompatible", |m| 1.0 - m, |_, _| 0.3);
    let p = Problem::new(c, data).unwrap();
    let s = solve(&p, 2.0, &small_config()).unwrap();
    // with β ≡ 0 the operator does not read the field, so the residual is
    // the distance to the exact solution
    let pts: Vec<(f64, f64)> = [0.5, 1.0, 2.0]
        .iter()
        .flat_map(|&t| s.n.maturities().iter().step_by(7).map(move |&m| (t, m)))
        .collect();
    let probe = residual_oracle(&p, &s.n, &pts).unwrap();
    let exact = pts
        .iter()
        .map(|&(t, m)| (s.n.eval(t, m).unwrap() - no_feedback_exact(t, m, 0.3)).abs())
        .fold(0.0, f64::max);
    assert!((probe.sup - exact).abs() < 1e-12, "{} {}", probe.sup, exact);
}

#[test]
fn linear_regime_scales_with_data() {
    // β ≡ β₀ constant in x makes the problem linear
    let mut c = canonical(0.0);
    c.reintroduction = Reintroduction::custom("flat", |_, _| 0.04);
    let base = InitialData::compatible("base", &c, |m| 0.1 * (1.0 - m));
    let p = Problem::new(c, base.clone()).unwrap();
    let s1 = solve(&p, 3.0, &small_config()).unwrap();
    let s3 = solve(&p.with_data(base.scaled(3.0)), 3.0, &small_config()).unwrap();
    for (a, b) in s1.n.values().iter().zip(s3.n.values()) {
        assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1e-3));
    }
}

#[test]
fn window_records_are_consistent() {
    let p = canonical_problem();
    let s = solve(&p, 4.0, &small_config()).unwrap();
    let r = &s.report;
    assert_eq!(r.windows.first().unwrap().start, 0.0);
    for w in r.windows.windows(2) {
        assert!((w[0].end - w[1].start).abs() < 1e-12);
    }
    assert!((r.windows.last().unwrap().end - r.horizon).abs() < 1e-12);
    assert_eq!(
        r.total_iterations,
        r.windows.iter().map(|w| w.iterations).sum::<usize>()
    );
    for w in &r.windows {
        assert!(w.q <= 0.5 + 1e-12);
        assert!(w.final_change <= 1e-12 * s.n.sup().max(1.0));
    }
}

#[test]
fn non_hill_rates_are_solved() {
    let mut c = canonical(0.0);
    c.reintroduction = Reintroduction::custom("exp", |_, x| 0.04 * (-x.max(0.0)).exp());
    let data = InitialData::compatible("c", &c, |m| 0.1 * (1.0 - m));
    let p = Problem::new(c, data).unwrap();
    let s = solve(&p, 3.0, &small_config()).unwrap();
    let h = picard_step(&p, &s.n).unwrap();
    assert!(forward_distance(&h, &s.n) < 1e-11);
}

#[test]
fn power_velocity_runs() {
    let mut c = canonical(0.04);
    c.velocity = Velocity::power(0.3, 1.5).unwrap();
    let data = InitialData::compatible("c", &c, |m| 0.1 * (1.0 - m));
    let p = Problem::new(c, data).unwrap();
    let s = solve(&p, 2.0, &small_config()).unwrap();
    assert!(s.n.min() >= -1e-12 && s.p.min() >= -1e-12);
    assert!(forward_distance(&picard_step(&p, &s.n).unwrap(), &s.n) < 1e-11);
}
