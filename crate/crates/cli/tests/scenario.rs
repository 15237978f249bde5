use matstruct_cli::{CliError, Scenario, PRESETS};
use proptest::prelude::*;

const MINIMAL: &str = r#"
[model]
alpha = 0.2
tau = 1.0
division_slope = 0.5
delta = 0.05
gamma = 0.1
beta0 = 0.04

[initial]
kind = "zero"

[run]
horizon = 5.0
"#;

#[test]
fn linear_stable_preset_has_canonical_parameters() {
    let s = Scenario::preset("linear_stable").unwrap();
    let m = &s.model;
    assert_eq!((m.alpha, m.power, m.tau, m.tau_slope), (0.2, 1.0, 1.0, 0.0));
    assert_eq!(m.division_slope, 0.5);
    assert_eq!((m.delta, m.gamma, m.beta0), (0.05, 0.1, 0.04));
}

#[test]
fn every_preset_loads() {
    for (name, _) in PRESETS {
        Scenario::preset(name).unwrap();
    }
    assert!(Scenario::preset("nope").is_err());
}

#[test]
fn empty_file_lists_required_keys() {
    match Scenario::parse("") {
        Err(CliError::MissingKeys(keys)) => {
            for k in ["model.alpha", "model.beta0", "initial.kind", "run.horizon"] {
                assert!(keys.iter().any(|x| x == k), "{k} not in {keys:?}");
            }
        }
        other => panic!("expected missing keys, got {other:?}"),
    }
}

#[test]
fn negative_horizon_is_rejected() {
    let text = MINIMAL.replace("horizon = 5.0", "horizon = -1.0");
    let err = Scenario::parse(&text).unwrap_err();
    assert!(
        matches!(err, CliError::Invalid(ref m) if m.contains("run.horizon")),
        "{err}"
    );
}

#[test]
fn unknown_keys_are_rejected_with_context() {
    let text = MINIMAL.replace("beta0 = 0.04", "beta0 = 0.04\nbeta1 = 2.0");
    let err = Scenario::parse(&text).unwrap_err().to_string();
    assert!(err.contains("beta1") && err.contains("line"), "{err}");
    let text = format!("{MINIMAL}\n[extra]\nx = 1\n");
    assert!(Scenario::parse(&text).is_err());
}

#[test]
fn unknown_mode_is_rejected() {
    let text = MINIMAL.replace("horizon = 5.0", "horizon = 5.0\nmode = \"plot\"");
    assert!(matches!(Scenario::parse(&text), Err(CliError::Parse(_))));
}

#[test]
fn defaults_are_filled() {
    let s = Scenario::parse(MINIMAL).unwrap();
    assert_eq!(s.model.theta, 1.0);
    assert_eq!(s.model.hill_exponent, 2.0);
    assert_eq!(s.grid.maturity_nodes, 200);
    assert!(s.sweep.is_none());
}

fn scenario_strategy() -> impl Strategy<Value = Scenario> {
    (
        0.01f64..1.0,
        1.0f64..3.0,
        0.1f64..2.0,
        0.1f64..0.9,
        (0.0f64..0.5, 0.0f64..0.5, 0.0f64..0.2),
        proptest::option::of(any::<u64>()),
        proptest::option::of(proptest::collection::vec(0.0f64..0.1, 0..4)),
        0.1f64..20.0,
    )
        .prop_map(
            |(alpha, power, tau, slope, (delta, gamma, beta0), seed, axis, horizon)| {
                let mut s = Scenario::parse(MINIMAL).unwrap();
                s.model.alpha = alpha;
                s.model.power = power;
                s.model.tau = tau;
                s.model.division_slope = slope;
                s.model.delta = delta;
                s.model.gamma = gamma;
                s.model.beta0 = beta0;
                s.run.seed = seed;
                s.run.horizon = horizon;
                s.grid.dt = seed.map(|v| 1e-3 + (v % 100) as f64 * 1e-3);
                s.sweep = axis.map(|b| matstruct_cli::scenario::SweepSection {
                    beta0: Some(b),
                    ..Default::default()
                });
                s
            },
        )
}

proptest! {
    #[test]
    fn serialization_round_trips(s in scenario_strategy()) {
        let text = s.to_toml().unwrap();
        prop_assert_eq!(Scenario::parse(&text).unwrap(), s);
    }
}
