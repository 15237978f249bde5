//! Fixtures shared by the benchmarks.

use matstruct_core::*;

pub fn canonical_coefficients() -> ModelCoefficients {
    ModelCoefficients {
        velocity: Velocity::linear(0.2).unwrap(),
        division_age: Profile::Constant(1.0),
        division_map: DivisionMap::linear(0.5).unwrap(),
        resting_loss: Profile::Constant(0.05),
        apoptosis: Profile::Constant(0.1),
        reintroduction: Reintroduction::hill(0.04, 1.0, 2.0).unwrap(),
    }
}

pub fn canonical_problem() -> Problem {
    let c = canonical_coefficients();
    let data = InitialData::compatible("canonical", &c, |m| 0.1 * (1.0 - m));
    Problem::new(c, data).unwrap()
}

/// V(m) = 0.3 m^1.5 and τ(m) = 1 + 0.5m: every map goes through the
/// numerical paths.
pub fn nonlinear_coefficients() -> ModelCoefficients {
    ModelCoefficients {
        velocity: Velocity::power(0.3, 1.5).unwrap(),
        division_age: Profile::Affine {
            intercept: 1.0,
            slope: 0.5,
        },
        ..canonical_coefficients()
    }
}

pub fn config(nodes: usize) -> SolverConfig {
    SolverConfig {
        maturity_nodes: nodes,
        ..SolverConfig::default()
    }
}
