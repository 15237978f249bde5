//! Scenario loading, batch verbs and output formats for the `matstruct`
//! binary.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod error;
pub mod output;
pub mod scenario;

pub use commands::{
    audit, dump_maps, run_diagnostics, run_mode, simulate, sweep, sweep_points, validate,
    write_error, AuditReport, Context, Diagnostics, SweepRow, ValidateSummary,
};
pub use error::{CliError, CliResult, ErrorRecord};
pub use scenario::{random_data, Scenario, PRESETS};
