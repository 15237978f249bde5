use serde::Serialize;

use crate::error::Result;
use crate::field::SolutionField;
use crate::model::Reintroduction;
use crate::problem::Problem;
use crate::solver::Solution;

pub const POSITIVITY_TOLERANCE: f64 = -1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub min_n: f64,
    /// (t, m) of the smallest N.
    pub min_n_at: (f64, f64),
    pub min_p: f64,
    pub min_p_at: (f64, f64),
    /// min over nodes of β(m, 0)N − β(m, N)N, the loss rewritten as a
    /// linear decay plus a non-negative remainder.
    pub min_loss_group: f64,
    /// min over nodes of the source F(t, m).
    pub min_source_group: f64,
    /// (β(m, x) − β(m, 0)) x ≤ 0 on the sampled range.
    pub regulation: bool,
    pub data_nonnegative: bool,
    /// Both hypotheses of the positivity result hold.
    pub applicable: bool,
    pub tolerance: f64,
    pub passed: bool,
}

/// Check (β(m, x) − β(m, 0)) x ≤ 0 for m on `grid` and |x| ≤ radius.
pub fn regulation_holds(rate: &Reintroduction, grid: &[f64], radius: f64) -> bool {
    let samples = 200;
    grid.iter().all(|&m| {
        let b0 = rate.eval(m, 0.0);
        (-samples..=samples).all(|k| {
            let x = radius * k as f64 / samples as f64;
            (rate.eval(m, x) - b0) * x <= 1e-15 * x.abs()
        })
    })
}

fn data_nonnegative(problem: &Problem, grid: &[f64]) -> bool {
    let data = problem.data();
    let maps = problem.maps();
    grid.iter().all(|&m| {
        let top = maps.tau_theta(m);
        data.mu_bar(m) >= 0.0 && (0..=40).all(|k| data.gamma(m, top * k as f64 / 40.0) >= 0.0)
    })
}

fn field_min(f: &SolutionField, from_row: usize) -> (f64, (f64, f64)) {
    let mut best = (f64::INFINITY, (0.0, 0.0));
    for r in from_row..f.rows() {
        for (j, &v) in f.row(r).iter().enumerate() {
            if v < best.0 {
                best = (v, (f.time(r), f.maturities()[j]));
            }
        }
    }
    best
}

/// Minima of N and P over t ≥ 0, the two non-negative groups the
/// positivity argument relies on, and its hypotheses.
pub fn positivity_audit(problem: &Problem, solution: &Solution) -> Result<PositivityReport> {
    let n = &solution.n;
    let first = (-n.t0() / n.dt()).round() as usize;
    let (min_n, min_n_at) = field_min(n, first);
    let (min_p, min_p_at) = field_min(&solution.p, 0);

    let coeffs = problem.coefficients();
    let maps = problem.maps();
    let nodes = n.maturities();
    let mut min_loss_group = f64::INFINITY;
    let mut min_source_group = f64::INFINITY;
    for r in first..n.rows() {
        let t = n.time(r);
        for (j, &m) in nodes.iter().enumerate() {
            let x = n.value(r, j);
            min_loss_group = min_loss_group.min((coeffs.beta(m, 0.0) - coeffs.beta(m, x)) * x);
            let lag = t - maps.tau_delta(m);
            let delayed = if lag > 0.0 {
                n.eval(lag, maps.delta(m))?
            } else {
                problem.data().mu_bar(maps.delta(m))
            };
            min_source_group = min_source_group.min(problem.source_f(t, m, delayed)?);
        }
    }

    let radius = n.sup().max(solution.p.sup()).max(1.0);
    let regulation = regulation_holds(&coeffs.reintroduction, nodes, radius);
    let data_nonnegative = data_nonnegative(problem, nodes);
    let tolerance = POSITIVITY_TOLERANCE;
    Ok(PositivityReport {
        min_n,
        min_n_at,
        min_p,
        min_p_at,
        min_loss_group,
        min_source_group,
        regulation,
        data_nonnegative,
        applicable: regulation && data_nonnegative,
        tolerance,
        passed: min_n >= tolerance
            && min_p >= tolerance
            && min_loss_group >= tolerance
            && min_source_group >= tolerance,
    })
}
