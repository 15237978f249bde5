#![allow(dead_code)]

use matstruct_core::*;

pub fn canonical(beta0: f64) -> ModelCoefficients {
    ModelCoefficients {
        velocity: Velocity::linear(0.2).unwrap(),
        division_age: Profile::Constant(1.0),
        division_map: DivisionMap::linear(0.5).unwrap(),
        resting_loss: Profile::Constant(0.05),
        apoptosis: Profile::Constant(0.1),
        reintroduction: Reintroduction::hill(beta0, 1.0, 2.0).unwrap(),
    }
}

pub fn canonical_problem() -> Problem {
    let c = canonical(0.04);
    let data = InitialData::compatible("canonical", &c, |m| 0.1 * (1.0 - m));
    Problem::new(c, data).unwrap()
}

pub fn small_config() -> SolverConfig {
    SolverConfig {
        maturity_nodes: 60,
        smallest_cell: 1e-3,
        steps_per_delay: 10,
        ..SolverConfig::default()
    }
}

/// N(t, m) for the canonical coefficients with β ≡ 0, μ̄(m) = 1 − m and
/// Γ ≡ c: transport plus the newborn flux 2·(g⁻¹)'·cξ(s, 2x) = 4cξ(s, 2x) while s ≤ τ = 1 and
/// the newborn maturity x stays below g(1) = 1/2.
pub fn no_feedback_exact(t: f64, m: f64, c: f64) -> f64 {
    let transport = (-0.25 * t).exp() * (1.0 - m * (-0.2 * t).exp());
    // x(s) = m e^{−0.2(t−s)} grows with s and leaves [0, 1/2) at s*
    let lo = 0.0;
    let hi = if m > 0.5 { t - (2.0 * m).ln() / 0.2 } else { t };
    let hi = hi.min(1.0);
    let births = if hi > lo {
        4.0 * c * (-0.25 * t).exp() * ((-0.05 * lo).exp() - (-0.05 * hi).exp()) / 0.05
    } else {
        0.0
    };
    transport + births
}
