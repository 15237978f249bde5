//! Every acceptance criterion, one PASS/FAIL line each.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use matstruct_cli::{random_data, simulate, Context, Scenario};
use matstruct_core::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn canonical(beta0: f64) -> ModelCoefficients {
    ModelCoefficients {
        velocity: Velocity::linear(0.2).unwrap(),
        division_age: Profile::Constant(1.0),
        division_map: DivisionMap::linear(0.5).unwrap(),
        resting_loss: Profile::Constant(0.05),
        apoptosis: Profile::Constant(0.1),
        reintroduction: Reintroduction::hill(beta0, 1.0, 2.0).unwrap(),
    }
}

fn canonical_problem() -> Problem {
    let c = canonical(0.04);
    let data = InitialData::compatible("canonical", &c, |m| 0.1 * (1.0 - m));
    Problem::new(c, data).unwrap()
}

/// Five delays: τ_max = 1.
const HORIZON: f64 = 5.0;

fn closed_form_geometry() -> Result<Outcome> {
    let p = canonical_problem();
    let maps = p.maps();
    let flow = p.flow();
    let e = (-0.2f64).exp();
    let nodes = MaturityGrid::uniform(200)?;
    let mut worst = 0.0f64;
    let mut err = |a: f64, b: f64| worst = worst.max((a - b).abs());
    for &m in nodes.nodes() {
        err(maps.theta(m), m * e);
        if m <= 0.5 {
            err(maps.delta(m), 2.0 * m * e);
            err(maps.zeta(m), 4.0 * (-0.3f64).exp());
        } else {
            err(maps.zeta(m), 0.0);
        }
        for &s in &[-5.0, -3.0, -1.0, -0.25, 0.0] {
            err(flow.chi(s, m)?, m * (0.2 * s).exp());
        }
        for &t in &[0.1, 1.0, 2.5, 5.0] {
            err(p.resting_kernel().eval(t, m)?, (-0.25 * t).exp());
            err(p.proliferating_kernel().eval(t, m)?, (-0.3 * t).exp());
        }
    }
    Ok(outcome(
        worst < 1e-8,
        format!("sup error {worst:.2e} over 200 nodes"),
    ))
}

fn fixed_point_residual() -> Result<Outcome> {
    let p = canonical_problem();
    let config = SolverConfig::default();
    let s = solve(&p, HORIZON, &config)?;
    let discrete = forward_distance(&picard_step(&p, &s.n)?, &s.n);
    let study = refinement_study(&p, HORIZON, &config)?;
    Ok(outcome(
        discrete < 1e-6 && study.coarse.sup < 1e-6 && study.ratio >= 2.0,
        format!(
            "|N - H(N)| = {discrete:.2e} on the grid, {:.2e} continuous; refinement ratio {:.2}",
            study.coarse.sup, study.ratio
        ),
    ))
}

fn trivial_equilibrium() -> Result<Outcome> {
    let p = Problem::new(canonical(0.04), InitialData::zero())?;
    let s = solve(&p, HORIZON, &SolverConfig::default())?;
    let (n, q) = (s.n.sup(), s.p.sup());
    Ok(outcome(
        n < 1e-12 && q < 1e-12,
        format!("sup N = {n:.1e}, sup P = {q:.1e}"),
    ))
}

fn positivity() -> Result<Outcome> {
    let c = canonical(0.04);
    let base = Problem::new(c.clone(), InitialData::zero())?;
    let mut worst = f64::INFINITY;
    for seed in 0..20u64 {
        let amplitude = 0.05 + 0.1 * seed as f64;
        let p = base.with_data(random_data(&c, seed, amplitude));
        let s = solve(&p, HORIZON, &SolverConfig::default())?;
        worst = worst.min(s.n.min()).min(s.p.min());
    }
    Ok(outcome(
        worst >= -1e-10,
        format!("min over 20 data sets of N and P = {worst:.2e}"),
    ))
}

fn shifted_operators() -> Result<Outcome> {
    let p = canonical_problem();
    let config = SolverConfig {
        steps_per_delay: 40,
        ..SolverConfig::default()
    };
    let s = solve(&p, HORIZON, &config)?;
    let beta = p.coefficients().reintroduction.clone();
    let b0 = move |m: f64| beta.eval(m, 0.0);
    let shifts: [&(dyn Fn(f64) -> f64 + Sync); 4] = [&|_| 0.0, &b0, &|_| 0.5, &|m| m];
    let mut worst = 0.0f64;
    for a in shifts {
        worst = worst.max(forward_distance(&apply_ha(&p, &s.n, a)?, &s.n));
    }
    Ok(outcome(
        worst < 5e-6,
        format!("max over four shifts of |H^a(N) - N| = {worst:.2e}"),
    ))
}

/// μ̄ ≡ ε, Γ ≡ εL with ε = 0.01.
fn ball_problem() -> Problem {
    let eps = 0.01;
    let l = 0.04;
    Problem::new(
        canonical(0.04),
        InitialData::new("ball", move |_| eps, move |_, _| eps * l),
    )
    .unwrap()
}

fn ball_run() -> Result<(Problem, Solution, StabilityCertificate)> {
    let p = ball_problem();
    let s = solve(&p, 10.0, &SolverConfig::default())?;
    let c = stability_certificate(&p, 0.01);
    Ok((p, s, c))
}

fn invariance_ball() -> Result<Outcome> {
    let (p, s, c) = ball_run()?;
    let ball = data_ball(&p, &c);
    let first = (-s.n.t0() / s.n.dt()).round() as usize;
    let sup = (first..s.n.rows())
        .map(|r| s.n.row_sup(r))
        .fold(0.0, f64::max);
    Ok(outcome(
        c.invariance
            && ball.inside
            && (c.margin - 0.05).abs() < 1e-15
            && sup <= 0.01 * (1.0 + 1e-6),
        format!("sup_t |N| = {sup:.10}, data inside ball: {}", ball.inside),
    ))
}

fn exponential_envelope() -> Result<Outcome> {
    let (_, s, c) = ball_run()?;
    let fit = decay_rate_estimate(&s.n, c.tau_max, Some(&c))?;
    let Some(env) = fit.envelope.clone() else {
        return Ok(outcome(false, "no certified rate".into()));
    };
    let rho = c.rho.unwrap_or(f64::NAN);
    Ok(outcome(
        env.violations == 0 && env.checked > 0 && fit.rate >= rho,
        format!(
            "rho = {rho:.4}, c = {:.4}, {} rows checked, {} violations, fitted d = {:.4}",
            env.c, env.checked, env.violations, fit.rate
        ),
    ))
}

fn continuous_dependence() -> Result<Outcome> {
    let p = canonical_problem();
    let other = p.data().with_mu_shift(1e-3);
    let probe = continuity_probe(&p, &other, 3.0, &SolverConfig::default())?;
    let k = probe.times.len() - 1;
    let (t, ratio, bound) = (probe.times[k], probe.ratio[k], probe.bound[k]);
    Ok(outcome(
        (t - 3.0).abs() < 1e-9 && ratio <= bound && probe.bounded,
        format!("ratio {ratio:.4} <= C(3) = {bound:.4}"),
    ))
}

fn certificate_arithmetic() -> Result<Outcome> {
    let zeta = 4.0 * (-0.3f64).exp();
    let c = certificate_from_constants(0.25, 0.3, 2.0, 0.04, false, zeta, 1.0, 0.01);
    let from_problem = stability_certificate(&canonical_problem(), 0.01);
    Ok(outcome(
        c.margin == 0.25 - 0.2 && from_problem.margin == 0.25 - 0.2 && c.local,
        format!(
            "margin = 0.25 - 0.2 = {} (|margin - 0.05| = {:.1e})",
            c.margin,
            (c.margin - 0.05).abs()
        ),
    ))
}

fn determinism() -> Result<Outcome> {
    let run = |scenario: &Scenario| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        let ctx = Context::new(
            scenario.clone(),
            Some(dir.path().to_path_buf()),
            None,
            Some(42),
        )
        .unwrap();
        simulate(&ctx).unwrap();
        std::fs::read(dir.path().join("field.csv")).unwrap()
    };
    let mut random = Scenario::preset("linear_stable").unwrap();
    random.initial.kind = matstruct_cli::scenario::InitialKind::Random;
    let mut same = true;
    for s in [Scenario::preset("linear_stable").unwrap(), random] {
        let (a, b) = (run(&s), run(&s));
        same &= !a.is_empty() && a == b;
    }
    Ok(outcome(
        same,
        "field.csv identical across repeated runs".into(),
    ))
}

type Criterion = (&'static str, Duration, fn() -> Result<Outcome>);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (
            "closed-form geometry",
            Duration::from_secs(1),
            closed_form_geometry,
        ),
        (
            "fixed-point residual",
            Duration::from_secs(120),
            fixed_point_residual,
        ),
        (
            "trivial equilibrium",
            Duration::from_secs(60),
            trivial_equilibrium,
        ),
        ("positivity", Duration::from_secs(600), positivity),
        (
            "shifted operators",
            Duration::from_secs(120),
            shifted_operators,
        ),
        ("invariance ball", Duration::from_secs(120), invariance_ball),
        (
            "exponential envelope",
            Duration::from_secs(120),
            exponential_envelope,
        ),
        (
            "continuous dependence",
            Duration::from_secs(120),
            continuous_dependence,
        ),
        (
            "certificate arithmetic",
            Duration::from_secs(10),
            certificate_arithmetic,
        ),
        ("determinism", Duration::from_secs(120), determinism),
    ];
    let mut failures = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let (passed, detail) = match result {
            Ok(o) => (o.passed && elapsed <= *limit, o.detail),
            Err(e) => (false, format!("error: {e}")),
        };
        if !passed {
            failures += 1;
        }
        println!(
            "{} {:>2} {name}: {detail} [{:.2} s, limit {} s]",
            if passed { "PASS" } else { "FAIL" },
            i + 1,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
