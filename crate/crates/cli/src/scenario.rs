//! Scenario files: sectioned TOML with strict key checking.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use matstruct_core::{
    DivisionMap, InitialData, ModelCoefficients, Profile, Reintroduction, SolverConfig, Velocity,
};

use crate::error::{CliError, CliResult};

const REQUIRED: &[(&str, &[&str])] = &[
    (
        "model",
        &["alpha", "tau", "division_slope", "delta", "gamma", "beta0"],
    ),
    ("initial", &["kind"]),
    ("run", &["horizon"]),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub model: ModelSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub grid: GridSection,
    pub run: RunSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// V(m) = α m^p, τ(m) = tau + tau_slope·m, g(m) = division_slope·m,
/// constant δ and γ, Hill reintroduction β₀θⁿ/(θⁿ + xⁿ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub alpha: f64,
    #[serde(default = "one")]
    pub power: f64,
    pub tau: f64,
    #[serde(default)]
    pub tau_slope: f64,
    pub division_slope: f64,
    pub delta: f64,
    pub gamma: f64,
    pub beta0: f64,
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "two")]
    pub hill_exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Zero,
    /// μ̄ affine, Γ(m, a) = β(m, μ̄(m)) μ̄(m).
    Compatible,
    /// μ̄ and Γ both affine in m, Γ constant in age.
    ClosedForm,
    /// Seeded non-negative compatible data.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub kind: InitialKind,
    #[serde(default)]
    pub mu_intercept: f64,
    #[serde(default)]
    pub mu_slope: f64,
    #[serde(default)]
    pub gamma_intercept: f64,
    #[serde(default)]
    pub gamma_slope: f64,
    /// Scale of randomized data.
    #[serde(default = "tenth")]
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub maturity_nodes: usize,
    pub smallest_cell: f64,
    pub grading: f64,
    pub steps_per_delay: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        let c = SolverConfig::default();
        Self {
            maturity_nodes: c.maturity_nodes,
            smallest_cell: c.smallest_cell,
            grading: c.grading,
            steps_per_delay: c.steps_per_delay,
            dt: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Simulate,
    Audit,
    Sweep,
    MapsDump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "simulate")]
    pub mode: Mode,
    pub horizon: f64,
    #[serde(default = "tolerance")]
    pub tolerance: f64,
    #[serde(default = "iterations")]
    pub max_iterations: usize,
    /// Radius of the neighbourhood of zero for the stability certificate.
    #[serde(default = "hundredth")]
    pub epsilon: f64,
    /// Seeds above the TOML integer range are written as strings.
    #[serde(default, skip_serializing_if = "Option::is_none", with = "seed_format")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub dump_maps: bool,
}

/// Axes of a stability sweep; an absent axis keeps the model value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<Vec<f64>>,
    /// Horizon of each short run; defaults to the run horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

mod seed_format {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Int(u64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(seed: &Option<u64>, s: S) -> Result<S::Ok, S::Error> {
        match seed {
            Some(v) if *v <= i64::MAX as u64 => s.serialize_u64(*v),
            Some(v) => s.serialize_str(&v.to_string()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Int(v) => Ok(Some(v)),
            Repr::Text(t) => t.parse().map(Some).map_err(D::Error::custom),
        }
    }
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn tenth() -> f64 {
    0.1
}
fn hundredth() -> f64 {
    0.01
}
fn tolerance() -> f64 {
    SolverConfig::default().tolerance
}
fn iterations() -> usize {
    SolverConfig::default().max_iterations
}
fn simulate() -> Mode {
    Mode::Simulate
}

pub const PRESETS: &[(&str, &str)] = &[
    (
        "linear_stable",
        include_str!("../presets/linear_stable.toml"),
    ),
    ("trivial", include_str!("../presets/trivial.toml")),
    ("beta0_006", include_str!("../presets/beta0_006.toml")),
];

impl Scenario {
    pub fn parse(text: &str) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| CliError::Parse(e.to_string()))?;
        let mut missing = Vec::new();
        for (section, keys) in REQUIRED {
            let sub = table.get(*section).and_then(|v| v.as_table());
            for key in *keys {
                if !sub.is_some_and(|t| t.contains_key(*key)) {
                    missing.push(format!("{section}.{key}"));
                }
            }
        }
        if !missing.is_empty() {
            return Err(CliError::MissingKeys(missing));
        }
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        let (_, text) = PRESETS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| CliError::Invalid(format!("unknown preset `{name}`")))?;
        Self::parse(text)
    }

    /// Canonical serialization; `parse(to_toml(s)) == s`.
    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Invalid(e.to_string()))
    }

    /// Range checks that do not need the coefficient machinery.
    pub fn validate(&self) -> CliResult<()> {
        let mut bad = Vec::new();
        let run = &self.run;
        if !(run.horizon > 0.0 && run.horizon.is_finite()) {
            bad.push(format!("run.horizon must be positive, got {}", run.horizon));
        }
        if !(run.tolerance > 0.0) {
            bad.push("run.tolerance must be positive".into());
        }
        if run.max_iterations == 0 {
            bad.push("run.max_iterations must be positive".into());
        }
        if !(run.epsilon > 0.0) {
            bad.push("run.epsilon must be positive".into());
        }
        let m = &self.model;
        for (name, v) in [
            ("model.delta", m.delta),
            ("model.gamma", m.gamma),
            ("model.beta0", m.beta0),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                bad.push(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(m.theta > 0.0) {
            bad.push(format!("model.theta must be positive, got {}", m.theta));
        }
        let g = &self.grid;
        if g.maturity_nodes < 3 {
            bad.push("grid.maturity_nodes must be at least 3".into());
        }
        if let Some(dt) = g.dt {
            if !(dt > 0.0) {
                bad.push(format!("grid.dt must be positive, got {dt}"));
            }
        }
        if let Some(h) = self.sweep.as_ref().and_then(|s| s.horizon) {
            if !(h > 0.0) {
                bad.push(format!("sweep.horizon must be positive, got {h}"));
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Invalid(bad.join("; ")))
        }
    }

    pub fn coefficients(&self) -> CliResult<ModelCoefficients> {
        let m = &self.model;
        let division_age = if m.tau_slope == 0.0 {
            Profile::Constant(m.tau)
        } else {
            Profile::Affine {
                intercept: m.tau,
                slope: m.tau_slope,
            }
        };
        Ok(ModelCoefficients {
            velocity: Velocity::power(m.alpha, m.power)?,
            division_age,
            division_map: DivisionMap::linear(m.division_slope)?,
            resting_loss: Profile::Constant(m.delta),
            apoptosis: Profile::Constant(m.gamma),
            reintroduction: Reintroduction::hill(m.beta0, m.theta, m.hill_exponent)?,
        })
    }

    pub fn initial_data(&self, coeffs: &ModelCoefficients, seed: u64) -> InitialData {
        let i = &self.initial;
        let (a, b) = (i.mu_intercept, i.mu_slope);
        match i.kind {
            InitialKind::Zero => InitialData::zero(),
            InitialKind::Compatible => {
                InitialData::compatible("compatible", coeffs, move |m| a + b * m)
            }
            InitialKind::ClosedForm => {
                let (c, d) = (i.gamma_intercept, i.gamma_slope);
                InitialData::new("closed_form", move |m| a + b * m, move |m, _| c + d * m)
            }
            InitialKind::Random => random_data(coeffs, seed, i.amplitude),
        }
    }

    pub fn solver_config(&self) -> SolverConfig {
        let g = &self.grid;
        SolverConfig {
            maturity_nodes: g.maturity_nodes,
            smallest_cell: g.smallest_cell,
            grading: g.grading,
            dt: g.dt,
            steps_per_delay: g.steps_per_delay,
            tolerance: self.run.tolerance,
            max_iterations: self.run.max_iterations,
            ..SolverConfig::default()
        }
    }
}

/// Non-negative compatible data from a seed: μ̄ a random non-negative
/// combination of 1, m, 1 − m and sin(πm) scaled to sup ≤ amplitude, and Γ
/// decaying in age at a random rate.
pub fn random_data(coeffs: &ModelCoefficients, seed: u64, amplitude: f64) -> InitialData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w: [f64; 4] = std::array::from_fn(|_| rng.gen::<f64>());
    let decay: f64 = rng.gen_range(0.0..2.0);
    let scale = amplitude / w.iter().sum::<f64>().max(f64::MIN_POSITIVE);
    let mu = move |m: f64| {
        scale * (w[0] + w[1] * m + w[2] * (1.0 - m) + w[3] * (std::f64::consts::PI * m).sin())
    };
    InitialData::compatible_with_shape(format!("random:{seed}"), coeffs, mu, move |_, a| {
        (-decay * a).exp()
    })
}
