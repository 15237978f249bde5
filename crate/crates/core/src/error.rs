use thiserror::Error;

/// Errors raised by the model, flow, commitment, solver and analysis layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("coefficients failed validation: {0}")]
    Validation(String),

    #[error("characteristic integration failed at s = {s} from m = {m}: {reason}")]
    FlowIntegration { s: f64, m: f64, reason: String },

    #[error("time of flight from m1 = 0 diverges")]
    DivergentFlight,

    #[error("adaptive quadrature did not converge on [{a}, {b}] (estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("could not bracket the commitment maturity for m = {m}: {reason}")]
    Bracket { m: f64, reason: String },

    #[error("non-finite integrand at t = {t}, m = {m}")]
    NonFinite { t: f64, m: f64 },

    #[error("lookup (t = {t}, m = {m}) is outside the field domain")]
    OutOfRange { t: f64, m: f64 },

    #[error("Picard window collapsed below one time step at t = {t}: {reason}")]
    WindowCollapse { t: f64, reason: String },

    #[error("Picard iteration cap {cap} exceeded on window starting at t = {t} (last change {change:e})")]
    IterationCap { cap: usize, t: f64, change: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Short machine-readable tag for error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter { .. } => "invalid_parameter",
            Error::Validation(_) => "validation",
            Error::FlowIntegration { .. } => "flow_integration",
            Error::DivergentFlight => "divergent_flight",
            Error::Quadrature { .. } => "quadrature",
            Error::Bracket { .. } => "bracket",
            Error::NonFinite { .. } => "non_finite",
            Error::OutOfRange { .. } => "out_of_range",
            Error::WindowCollapse { .. } => "window_collapse",
            Error::IterationCap { .. } => "iteration_cap",
        }
    }
}
