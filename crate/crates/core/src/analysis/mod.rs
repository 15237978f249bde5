//! Numerical witnesses for positivity, invariance, stability and
//! continuous dependence on computed solutions.

mod certificate;
mod continuity;
mod decay;
mod positivity;
mod residual;

pub use certificate::{
    certificate_from_constants, data_ball, stability_certificate, DataBall, StabilityCertificate,
};
pub use continuity::{continuity_probe, ContinuityProbe};
pub use decay::{decay_rate_estimate, DecayFit, EnvelopeCheck};
pub use positivity::{positivity_audit, regulation_holds, PositivityReport};
pub use residual::{refinement_study, residual_oracle, RefinementStudy, ResidualProbe};

use crate::error::Result;
use crate::field::SolutionField;
use crate::problem::Problem;
use crate::solver::{apply_on_lattice, lattice_for, Shift};

/// H^a(N) on the field's own grid: the resting equation rewritten with an
/// extra decay a(m) along characteristics, compensated inside the integral.
/// A solution is a fixed point of every member of the family.
pub fn apply_ha(
    problem: &Problem,
    field: &SolutionField,
    a: &(dyn Fn(f64) -> f64 + Sync),
) -> Result<SolutionField> {
    let lattice = lattice_for(problem, field)?;
    let shift = Shift::new(&lattice, a)?;
    apply_on_lattice(&lattice, field, Some(&shift))
}

/// sup over rows with t ≥ 0 of |a − b| on matching grids.
pub fn forward_distance(a: &SolutionField, b: &SolutionField) -> f64 {
    let first = (-a.t0() / a.dt()).round() as usize;
    (first..a.rows())
        .flat_map(|r| a.row(r).iter().zip(b.row(r)).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max)
}
