//! The batch verbs.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use matstruct_core::{
    apply_ha, continuity_probe, data_ball, decay_rate_estimate, forward_distance, picard_step,
    positivity_audit, refinement_study, solve, stability_certificate, ContinuityProbe, DataBall,
    DecayFit, PositivityReport, Problem, RefinementStudy, Solution, SolveReport,
    StabilityCertificate, ValidationReport,
};

use crate::error::{CliError, CliResult};
use crate::output::{atomic_write, field_csv, maps_csv, num, write_json};
use crate::scenario::{Mode, Scenario};

pub const DEFAULT_OUT_DIR: &str = "out";
/// Sup norm below which a run counts as the trivial equilibrium.
pub const TRIVIAL_THRESHOLD: f64 = 1e-12;
/// μ̄ perturbation used by the continuity probe.
pub const CONTINUITY_SHIFT: f64 = 1e-3;

/// Effective settings after command-line overrides.
#[derive(Debug, Clone)]
pub struct Context {
    pub scenario: Scenario,
    pub out_dir: PathBuf,
    pub seed: u64,
}

impl Context {
    /// `out` (flag or environment) beats the scenario's `run.out_dir`;
    /// `horizon` and `seed` override the file.
    pub fn new(
        mut scenario: Scenario,
        out: Option<PathBuf>,
        horizon: Option<f64>,
        seed: Option<u64>,
    ) -> CliResult<Self> {
        if let Some(h) = horizon {
            scenario.run.horizon = h;
        }
        if let Some(s) = seed {
            scenario.run.seed = Some(s);
        }
        scenario.validate()?;
        let out_dir = out
            .or_else(|| scenario.run.out_dir.clone().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        let seed = scenario.run.seed.unwrap_or(0);
        Ok(Self {
            scenario,
            out_dir,
            seed,
        })
    }

    pub fn problem(&self) -> CliResult<Problem> {
        let coeffs = self.scenario.coefficients()?;
        let data = self.scenario.initial_data(&coeffs, self.seed);
        Ok(Problem::new(coeffs, data)?)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }
}

#[derive(Debug, Serialize)]
pub struct ValidateSummary {
    pub status: &'static str,
    pub scenario: Scenario,
    pub validation: ValidationReport,
    pub compatibility_deviation: f64,
    pub compatible: bool,
}

pub fn validate(ctx: &Context) -> CliResult<ValidateSummary> {
    let problem = ctx.problem()?;
    let compat =
        matstruct_core::check_compatibility(problem.data(), problem.coefficients(), 1000, 1e-10);
    Ok(ValidateSummary {
        status: "ok",
        scenario: ctx.scenario.clone(),
        validation: problem.validation().clone(),
        compatibility_deviation: compat.max_deviation,
        compatible: compat.passed,
    })
}

#[derive(Debug, Serialize)]
pub struct Diagnostics {
    pub status: &'static str,
    pub seed: u64,
    pub scenario: Scenario,
    pub solve: SolveReport,
    pub sup_n: f64,
    pub sup_p: f64,
    pub trivial_equilibrium: bool,
    /// ‖H(N) − N‖ for the returned field.
    pub picard_residual: f64,
    pub positivity: PositivityReport,
    pub certificate: StabilityCertificate,
    pub data_ball: DataBall,
    /// The envelope is asserted only for certified runs whose data lie in
    /// the certificate's ball.
    pub envelope_asserted: bool,
    pub envelope_pass: Option<bool>,
    pub decay: Option<DecayFit>,
}

/// Solve and summarize; no files written.
pub fn run_diagnostics(ctx: &Context, problem: &Problem) -> CliResult<(Solution, Diagnostics)> {
    let run = &ctx.scenario.run;
    let config = ctx.scenario.solver_config();
    let solution = solve(problem, run.horizon, &config)?;
    let residual = forward_distance(&picard_step(problem, &solution.n)?, &solution.n);
    let positivity = positivity_audit(problem, &solution)?;
    let certificate = stability_certificate(problem, run.epsilon);
    let ball = data_ball(problem, &certificate);
    let asserted = certificate.local_resting && ball.inside;
    let t_start = problem.maps().tau_max;
    let decay = decay_rate_estimate(&solution.n, t_start, asserted.then_some(&certificate)).ok();
    let envelope_pass = decay
        .as_ref()
        .and_then(|d| d.envelope.as_ref())
        .map(|e| e.violations == 0);
    let first = (-solution.n.t0() / solution.n.dt()).round() as usize;
    let sup_n = (first..solution.n.rows())
        .map(|r| solution.n.row_sup(r))
        .fold(0.0, f64::max);
    let sup_p = solution.p.sup();
    let diagnostics = Diagnostics {
        status: "ok",
        seed: ctx.seed,
        scenario: ctx.scenario.clone(),
        solve: solution.report.clone(),
        sup_n,
        sup_p,
        trivial_equilibrium: sup_n < TRIVIAL_THRESHOLD && sup_p < TRIVIAL_THRESHOLD,
        picard_residual: residual,
        positivity,
        certificate,
        data_ball: ball,
        envelope_asserted: asserted,
        envelope_pass,
        decay,
    };
    Ok((solution, diagnostics))
}

pub fn simulate(ctx: &Context) -> CliResult<Diagnostics> {
    let problem = ctx.problem()?;
    let (solution, diagnostics) = run_diagnostics(ctx, &problem)?;
    atomic_write(&ctx.path("field.csv"), field_csv(&solution).as_bytes())?;
    if ctx.scenario.run.dump_maps {
        atomic_write(
            &ctx.path("maps.csv"),
            maps_csv(&problem.maps().rows()).as_bytes(),
        )?;
    }
    write_json(&ctx.path("diagnostics.json"), &diagnostics)?;
    Ok(diagnostics)
}

type Shift = Box<dyn Fn(f64) -> f64 + Sync>;

#[derive(Debug, Serialize)]
pub struct ShiftResidual {
    pub shift: &'static str,
    pub residual: f64,
}

#[derive(Debug, Serialize)]
pub struct AuditReport {
    pub diagnostics: Diagnostics,
    /// ‖H^a(N) − N‖ for several shifts a.
    pub shifted_residuals: Vec<ShiftResidual>,
    pub refinement: RefinementStudy,
    pub continuity: ContinuityProbe,
}

/// Simulation plus the full set of audits.
pub fn audit(ctx: &Context) -> CliResult<AuditReport> {
    let problem = ctx.problem()?;
    let (solution, diagnostics) = run_diagnostics(ctx, &problem)?;
    let beta = problem.coefficients().reintroduction.clone();
    let shifts: [(&'static str, Shift); 4] = [
        ("zero", Box::new(|_| 0.0)),
        ("beta_at_zero", Box::new(move |m| beta.eval(m, 0.0))),
        ("half", Box::new(|_| 0.5)),
        ("identity", Box::new(|m| m)),
    ];
    let shifted_residuals = shifts
        .iter()
        .map(|(name, a)| {
            let h = apply_ha(&problem, &solution.n, a.as_ref())?;
            Ok(ShiftResidual {
                shift: name,
                residual: forward_distance(&h, &solution.n),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let config = ctx.scenario.solver_config();
    let horizon = ctx.scenario.run.horizon;
    let refinement = refinement_study(&problem, horizon, &config)?;
    let other = problem.data().with_mu_shift(CONTINUITY_SHIFT);
    let continuity = continuity_probe(&problem, &other, horizon, &config)?;
    atomic_write(&ctx.path("field.csv"), field_csv(&solution).as_bytes())?;
    let report = AuditReport {
        diagnostics,
        shifted_residuals,
        refinement,
        continuity,
    };
    write_json(&ctx.path("audit.json"), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub index: usize,
    pub beta0: f64,
    pub delta: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub verdict: Option<bool>,
    pub margin: Option<f64>,
    pub rate: Option<f64>,
    /// verdict ⇒ observed decay.
    pub agreement: Option<bool>,
    pub error: Option<String>,
}

pub const SWEEP_HEADER: &str = "index,beta0,delta,gamma,alpha,verdict,margin,rate,agreement,error";

impl SweepRow {
    pub fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(num).unwrap_or_default();
        let flag = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.index,
            num(self.beta0),
            num(self.delta),
            num(self.gamma),
            num(self.alpha),
            flag(self.verdict),
            opt(self.margin),
            opt(self.rate),
            flag(self.agreement),
            self.error
                .as_deref()
                .unwrap_or("")
                .replace([',', '\n'], ";")
        )
    }
}

/// Grid points of the sweep in row-major order (β₀ slowest).
pub fn sweep_points(scenario: &Scenario) -> Vec<[f64; 4]> {
    let m = &scenario.model;
    let axes = scenario.sweep.clone().unwrap_or_default();
    let axis = |a: &Option<Vec<f64>>, base: f64| a.clone().unwrap_or_else(|| vec![base]);
    let (b, d, g, a) = (
        axis(&axes.beta0, m.beta0),
        axis(&axes.delta, m.delta),
        axis(&axes.gamma, m.gamma),
        axis(&axes.alpha, m.alpha),
    );
    let mut pts = Vec::new();
    for &b in &b {
        for &d in &d {
            for &g in &g {
                for &a in &a {
                    pts.push([b, d, g, a]);
                }
            }
        }
    }
    pts
}

fn sweep_point(ctx: &Context, index: usize, point: [f64; 4]) -> SweepRow {
    let [beta0, delta, gamma, alpha] = point;
    let mut row = SweepRow {
        index,
        beta0,
        delta,
        gamma,
        alpha,
        verdict: None,
        margin: None,
        rate: None,
        agreement: None,
        error: None,
    };
    let outcome = (|| -> CliResult<()> {
        let mut scenario = ctx.scenario.clone();
        scenario.model.beta0 = beta0;
        scenario.model.delta = delta;
        scenario.model.gamma = gamma;
        scenario.model.alpha = alpha;
        let horizon = scenario
            .sweep
            .as_ref()
            .and_then(|s| s.horizon)
            .unwrap_or(scenario.run.horizon);
        let coeffs = scenario.coefficients()?;
        let data = scenario.initial_data(&coeffs, ctx.seed);
        let problem = Problem::new(coeffs, data)?;
        let certificate = stability_certificate(&problem, scenario.run.epsilon);
        row.verdict = Some(certificate.local);
        row.margin = Some(certificate.margin);
        let solution = solve(&problem, horizon, &scenario.solver_config())?;
        let fit = decay_rate_estimate(&solution.n, problem.maps().tau_max, None)?;
        row.rate = Some(fit.rate);
        row.agreement = Some(!certificate.local || fit.rate > 0.0);
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row
}

/// Certificate verdict and fitted decay at every grid point. Points run in
/// parallel; each writes its own file, and the table is assembled in index
/// order.
pub fn sweep(ctx: &Context) -> CliResult<Vec<SweepRow>> {
    let points = sweep_points(&ctx.scenario);
    let dir = ctx.path("sweep");
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let rows: Vec<SweepRow> = points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let row = sweep_point(ctx, i, p);
            let text = format!("{SWEEP_HEADER}\n{}\n", row.csv_line());
            atomic_write(&dir.join(format!("point_{i:05}.csv")), text.as_bytes())?;
            Ok(row)
        })
        .collect::<CliResult<_>>()?;
    let mut table = format!("{SWEEP_HEADER}\n");
    for row in &rows {
        table.push_str(&row.csv_line());
        table.push('\n');
    }
    atomic_write(&ctx.path("sweep.csv"), table.as_bytes())?;
    Ok(rows)
}

pub fn dump_maps(ctx: &Context) -> CliResult<PathBuf> {
    let problem = ctx.problem()?;
    let path = ctx.path("maps.csv");
    atomic_write(&path, maps_csv(&problem.maps().rows()).as_bytes())?;
    Ok(path)
}

/// Record a failure in the output directory (best effort).
pub fn write_error(out_dir: &Path, error: &CliError) {
    let _ = write_json(&out_dir.join("error.json"), &error.record());
}

/// Dispatch on the scenario's own mode.
pub fn run_mode(ctx: &Context) -> CliResult<serde_json::Value> {
    Ok(match ctx.scenario.run.mode {
        Mode::Simulate => serde_json::to_value(simulate(ctx)?)?,
        Mode::Audit => serde_json::to_value(audit(ctx)?)?,
        Mode::Sweep => serde_json::to_value(sweep(ctx)?)?,
        Mode::MapsDump => serde_json::json!({ "status": "ok", "maps": dump_maps(ctx)? }),
    })
}
