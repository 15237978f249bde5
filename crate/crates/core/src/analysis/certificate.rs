use serde::Serialize;

use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCertificate {
    /// inf (δ + V').
    pub delta_tilde: f64,
    /// inf (γ + V').
    pub gamma_tilde: f64,
    /// sup |(g⁻¹)'|.
    pub kappa: f64,
    /// Lipschitz constant of x ↦ xβ(m, x) near zero.
    pub lipschitz: f64,
    pub lipschitz_empirical: bool,
    pub zeta_norm: f64,
    pub tau_max: f64,
    pub epsilon: f64,
    /// δ̃ − L(1 + 2κ).
    pub invariance_margin: f64,
    /// min{γ̃, δ̃} − L(1 + 2κ).
    pub margin: f64,
    /// Supremum of the feasible decay rates.
    pub rho_sup: Option<f64>,
    /// Midpoint of the feasible set, issued only when the invariance
    /// condition holds.
    pub rho: Option<f64>,
    pub c: Option<f64>,
    /// L(1 + 2κ) < δ̃: the ε-ball is invariant for N.
    pub invariance: bool,
    /// Invariance plus a feasible ρ: N decays exponentially near 0.
    pub local_resting: bool,
    /// L(1 + 2κ) < min{γ̃, δ̃}: N and P decay exponentially near 0.
    pub local: bool,
    /// `local` with a global, closed-form Lipschitz constant.
    pub global: bool,
}

impl StabilityCertificate {
    /// L(1 + ‖ζ‖ e^{ρ τ_max}) < δ̃ − ρ.
    pub fn rho_feasible(&self, rho: f64) -> bool {
        feasibility(
            self.delta_tilde,
            self.lipschitz,
            self.zeta_norm,
            self.tau_max,
            rho,
        ) > 0.0
    }

    /// c e^{−ρ (t − τ_max)} when a rate is certified.
    pub fn envelope(&self, t: f64) -> Option<f64> {
        Some(self.c? * (-self.rho? * (t - self.tau_max)).exp())
    }
}

fn feasibility(delta: f64, l: f64, zeta: f64, tau_max: f64, rho: f64) -> f64 {
    delta - rho - l * (1.0 + zeta * (rho * tau_max).exp())
}

/// The certificate from its constants; pure arithmetic.
#[allow(clippy::too_many_arguments)]
pub fn certificate_from_constants(
    delta_tilde: f64,
    gamma_tilde: f64,
    kappa: f64,
    lipschitz: f64,
    lipschitz_empirical: bool,
    zeta_norm: f64,
    tau_max: f64,
    epsilon: f64,
) -> StabilityCertificate {
    let load = lipschitz * (1.0 + 2.0 * kappa);
    let invariance_margin = delta_tilde - load;
    let margin = delta_tilde.min(gamma_tilde) - load;
    let invariance = invariance_margin > 0.0;
    let f = |rho: f64| feasibility(delta_tilde, lipschitz, zeta_norm, tau_max, rho);
    let rho_sup = (delta_tilde > 0.0 && f(0.0) > 0.0).then(|| {
        // f decreases in ρ and f(δ̃) < 0 whenever L > 0 or ρ = δ̃.
        let (mut lo, mut hi) = (0.0, delta_tilde);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    });
    let rho = rho_sup.filter(|_| invariance).map(|r| 0.5 * r);
    let c = rho.map(|r| (delta_tilde - r) * epsilon / f(r));
    let local_resting = invariance && rho.is_some();
    let local = local_resting && margin > 0.0;
    StabilityCertificate {
        delta_tilde,
        gamma_tilde,
        kappa,
        lipschitz,
        lipschitz_empirical,
        zeta_norm,
        tau_max,
        epsilon,
        invariance_margin,
        margin,
        rho_sup,
        rho,
        c,
        invariance,
        local_resting,
        local,
        global: local && !lipschitz_empirical,
    }
}

/// Size of the initial data against the ball the certificate is issued for.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataBall {
    /// sup |μ̄|.
    pub mu_norm: f64,
    /// sup |Γ| over 0 ≤ a ≤ τ(Θ(m)).
    pub gamma_norm: f64,
    /// ‖μ̄‖ ≤ ε and ‖Γ‖ ≤ εL: the envelope applies.
    pub inside: bool,
    /// ‖Γ‖ ≤ L‖μ̄‖, the data condition of the global statement.
    pub global_data: bool,
}

/// Where the problem's data sit relative to the certificate's ball.
pub fn data_ball(problem: &Problem, certificate: &StabilityCertificate) -> DataBall {
    let data = problem.data();
    let maps = problem.maps();
    let (mut mu_norm, mut gamma_norm) = (0.0f64, 0.0f64);
    for k in 0..=1000 {
        let m = k as f64 / 1000.0;
        mu_norm = mu_norm.max(data.mu_bar(m).abs());
        let top = maps.tau_theta(m);
        for i in 0..=20 {
            gamma_norm = gamma_norm.max(data.gamma(m, top * i as f64 / 20.0).abs());
        }
    }
    let eps = certificate.epsilon;
    let l = certificate.lipschitz;
    let slack = 1.0 + 1e-12;
    DataBall {
        mu_norm,
        gamma_norm,
        inside: mu_norm <= eps * slack && gamma_norm <= eps * l * slack,
        global_data: gamma_norm <= l * mu_norm * slack,
    }
}

/// Grid extrema of the coefficients, then the certificate arithmetic.
/// `epsilon` is the radius of the neighbourhood of zero.
pub fn stability_certificate(problem: &Problem, epsilon: f64) -> StabilityCertificate {
    let coeffs = problem.coefficients();
    let maps = problem.maps();
    let grid: Vec<f64> = maps
        .nodes()
        .iter()
        .copied()
        .chain((0..=1000).map(|k| k as f64 / 1000.0))
        .collect();
    let vprime = |m: f64| coeffs.velocity.derivative(m);
    let delta_tilde = grid
        .iter()
        .map(|&m| coeffs.resting_loss.eval(m) + vprime(m))
        .fold(f64::INFINITY, f64::min);
    let gamma_tilde = grid
        .iter()
        .map(|&m| coeffs.apoptosis.eval(m) + vprime(m))
        .fold(f64::INFINITY, f64::min);
    let lip = coeffs.reintroduction.lipschitz(epsilon, &grid);
    certificate_from_constants(
        delta_tilde,
        gamma_tilde,
        maps.kappa,
        lip.constant,
        lip.empirical,
        maps.zeta_sup,
        maps.tau_max,
        epsilon,
    )
}
