mod common;

use common::*;
use matstruct_core::*;

#[test]
fn canonical_certificate_from_the_problem() {
    let p = canonical_problem();
    let c = stability_certificate(&p, 0.01);
    assert_eq!(c.delta_tilde, 0.25);
    assert!((c.gamma_tilde - 0.3).abs() < 1e-15);
    assert!((c.kappa - 2.0).abs() < 1e-12);
    assert_eq!(c.lipschitz, 0.04);
    assert!(!c.lipschitz_empirical);
    assert!((c.zeta_norm - 4.0 * (-0.3f64).exp()).abs() < 1e-9);
    assert!((c.margin - 0.05).abs() < 1e-15);
    assert!(c.local && c.global);
    let ball = data_ball(&p, &c);
    assert!((ball.mu_norm - 0.1).abs() < 1e-15);
    assert!(!ball.inside);
    assert!(ball.global_data);
}

#[test]
fn custom_rates_get_empirical_constants() {
    let mut coeffs = canonical(0.0);
    coeffs.reintroduction = Reintroduction::custom("lin", |_, x| 0.04 / (1.0 + x.abs()));
    let p = Problem::new(coeffs, InitialData::zero()).unwrap();
    let c = stability_certificate(&p, 0.01);
    assert!(c.lipschitz_empirical);
    assert!(!c.global);
    assert!((c.lipschitz - 0.04).abs() < 1e-3);
}

#[test]
fn decay_envelope_holds_inside_the_ball() {
    let coeffs = canonical(0.04);
    let data = InitialData::compatible("ball", &coeffs, |_| 0.01);
    let p = Problem::new(coeffs, data).unwrap();
    let c = stability_certificate(&p, 0.01);
    assert!(data_ball(&p, &c).inside);
    let s = solve(&p, 6.0, &small_config()).unwrap();
    let fit = decay_rate_estimate(&s.n, 1.0, Some(&c)).unwrap();
    let env = fit.envelope.unwrap();
    assert_eq!(env.violations, 0);
    assert!(env.checked > 0);
    assert!(fit.rate >= c.rho.unwrap());
}

#[test]
fn continuity_probe_is_bounded() {
    let p = canonical_problem();
    let other = p.data().with_mu_shift(1e-3);
    let probe = continuity_probe(&p, &other, 3.0, &small_config()).unwrap();
    assert!((probe.data_distance - 1e-3).abs() < 1e-12);
    assert!(probe.bounded);
    assert_eq!(probe.times.len(), probe.deviation.len());
    assert!(probe.deviation[0] > 0.0);
    let same = continuity_probe(&p, p.data(), 1.0, &small_config()).unwrap();
    assert!(same.deviation.iter().all(|&d| d == 0.0));
}

#[test]
fn positivity_audit_reports_negative_data() {
    let coeffs = canonical(0.04);
    let data = InitialData::new("neg", |m| 0.05 - 0.1 * m, |_, _| 0.0);
    let p = Problem::new(coeffs, data).unwrap();
    let s = solve(&p, 2.0, &small_config()).unwrap();
    let audit = positivity_audit(&p, &s).unwrap();
    assert!(!audit.data_nonnegative && !audit.applicable);
    assert!(audit.min_n < 0.0);
    assert!(!audit.passed);
}

#[test]
fn regulation_fails_for_increasing_rates() {
    let rate = Reintroduction::custom("up", |_, x| 0.04 * (1.0 + x.max(0.0)));
    assert!(!regulation_holds(&rate, &[0.0, 0.5, 1.0], 1.0));
    let hill = Reintroduction::hill(0.04, 1.0, 2.0).unwrap();
    assert!(regulation_holds(&hill, &[0.0, 0.5, 1.0], 10.0));
}

#[test]
fn refinement_reduces_the_oracle_residual() {
    let p = canonical_problem();
    let study = refinement_study(&p, 2.0, &small_config()).unwrap();
    assert!(study.coarse.sup > 0.0);
    assert!(study.ratio >= 2.0, "{study:?}");
}
