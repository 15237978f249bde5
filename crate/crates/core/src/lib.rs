//! Two-phase maturity-structured cell population model with a
//! maturity-dependent division delay.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod commitment;
pub mod error;
pub mod field;
pub mod flow;
pub mod grid;
pub mod interp;
pub mod model;
pub mod problem;
pub mod quadrature;
pub mod solver;

pub use analysis::{
    apply_ha, certificate_from_constants, continuity_probe, data_ball, decay_rate_estimate,
    forward_distance, positivity_audit, refinement_study, regulation_holds, residual_oracle,
    stability_certificate, ContinuityProbe, DataBall, DecayFit, EnvelopeCheck, PositivityReport,
    RefinementStudy, ResidualProbe, StabilityCertificate,
};
pub use commitment::{CommitmentBuilder, CommitmentMaps, MapRow};
pub use error::{Error, Result};
pub use field::SolutionField;
pub use flow::{CharacteristicFlow, FlowBackend, Mortality, SurvivalKernel};
pub use grid::MaturityGrid;
pub use model::*;
pub use problem::Problem;
pub use solver::{
    picard_step, solve, transport_field, Solution, SolveReport, SolverConfig, WindowRecord,
};
