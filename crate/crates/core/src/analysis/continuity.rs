use serde::Serialize;

use crate::error::Result;
use crate::model::InitialData;
use crate::problem::Problem;
use crate::solver::{solve, SolverConfig};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuityProbe {
    pub times: Vec<f64>,
    /// sup_m |N₁(t, ·) − N₂(t, ·)|.
    pub deviation: Vec<f64>,
    /// ‖μ̄₁ − μ̄₂‖ + ‖Γ₁ − Γ₂‖.
    pub data_distance: f64,
    /// deviation / data distance (0 when the data coincide).
    pub ratio: Vec<f64>,
    /// C(t) = K̃ max{1, C̃} e^{L(R) K̃ (1 + ‖ζ‖) t}.
    pub bound: Vec<f64>,
    pub k_tilde: f64,
    pub c_tilde: f64,
    /// R = 1 + sup ‖N₁‖.
    pub radius: f64,
    pub lipschitz: f64,
    pub bounded: bool,
}

fn data_distance(problem: &Problem, a: &InitialData, b: &InitialData) -> f64 {
    let maps = problem.maps();
    let mut mu = 0.0f64;
    let mut gamma = 0.0f64;
    for k in 0..=2000 {
        let m = k as f64 / 2000.0;
        mu = mu.max((a.mu_bar(m) - b.mu_bar(m)).abs());
        if k % 10 == 0 {
            let top = maps.tau_theta(m);
            for i in 0..=40 {
                let age = top * i as f64 / 40.0;
                gamma = gamma.max((a.gamma(m, age) - b.gamma(m, age)).abs());
            }
        }
    }
    mu + gamma
}

/// Solve from the problem's data and from `other` on the same grid and
/// compare the deviation with the continuous-dependence constant.
pub fn continuity_probe(
    problem: &Problem,
    other: &InitialData,
    horizon: f64,
    config: &SolverConfig,
) -> Result<ContinuityProbe> {
    let second = problem.with_data(other.clone());
    let (s1, s2) = rayon::join(
        || solve(problem, horizon, config),
        || solve(&second, horizon, config),
    );
    let (s1, s2) = (s1?, s2?);
    let distance = data_distance(problem, problem.data(), other);

    let maps = problem.maps();
    let nodes = s1.n.maturities().to_vec();
    let first = (-s1.n.t0() / s1.n.dt()).round() as usize;
    let t_end = s1.n.t_end();
    let mut k_tilde = 1.0f64;
    for k in 0..=100 {
        let t = t_end * k as f64 / 100.0;
        for &m in &nodes {
            k_tilde = k_tilde.max(problem.resting_kernel().eval(t, m)?);
        }
    }
    let mut c_tilde = 0.0f64;
    for &m in &nodes {
        let (ginv, dginv) = maps.g_inverse(m);
        if dginv == 0.0 {
            continue;
        }
        let top = maps.tau_delta(m);
        for k in 0..=20 {
            let t = top * k as f64 / 20.0;
            let xi = problem.proliferating_kernel().eval(t, ginv)?;
            c_tilde = c_tilde.max((2.0 * dginv * xi).abs());
        }
    }
    let radius = 1.0
        + (first..s1.n.rows())
            .map(|r| s1.n.row_sup(r))
            .fold(0.0, f64::max);
    let lipschitz = problem
        .coefficients()
        .reintroduction
        .lipschitz(radius, &nodes)
        .constant;
    let growth = lipschitz * k_tilde * (1.0 + maps.zeta_sup);

    let mut probe = ContinuityProbe {
        times: Vec::new(),
        deviation: Vec::new(),
        data_distance: distance,
        ratio: Vec::new(),
        bound: Vec::new(),
        k_tilde,
        c_tilde,
        radius,
        lipschitz,
        bounded: true,
    };
    for r in first..s1.n.rows() {
        let t = s1.n.time(r);
        let dev =
            s1.n.row(r)
                .iter()
                .zip(s2.n.row(r))
                .fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        let ratio = if distance > 0.0 { dev / distance } else { 0.0 };
        let bound = k_tilde * c_tilde.max(1.0) * (growth * t).exp();
        probe.bounded &= dev <= bound * distance * (1.0 + 1e-9) + 1e-14;
        probe.times.push(t);
        probe.deviation.push(dev);
        probe.ratio.push(ratio);
        probe.bound.push(bound);
    }
    Ok(probe)
}
