//! Coefficient functions, initial data and structural checks for the
//! maturity-structured proliferating/resting model.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::quadrature::GaussRule;

/// A scalar coefficient on the maturity interval [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub enum Profile {
    Constant(f64),
    /// `intercept + slope * m`
    Affine {
        intercept: f64,
        slope: f64,
    },
    /// Sampled values, monotone cubic interpolation between nodes.
    Table(Pchip),
}

impl Profile {
    pub fn eval(&self, m: f64) -> f64 {
        match self {
            Profile::Constant(c) => *c,
            Profile::Affine { intercept, slope } => intercept + slope * m,
            Profile::Table(t) => t.eval(m),
        }
    }

    pub fn derivative(&self, m: f64) -> f64 {
        match self {
            Profile::Constant(_) => 0.0,
            Profile::Affine { slope, .. } => *slope,
            Profile::Table(t) => t.derivative(m),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Profile::Constant(_))
            || matches!(self, Profile::Affine { slope, .. } if *slope == 0.0)
    }
}

impl From<f64> for Profile {
    fn from(c: f64) -> Self {
        Profile::Constant(c)
    }
}

/// Maturation velocity V(m), with V(0) = 0.
#[derive(Debug, Clone, PartialEq)]
pub enum Velocity {
    /// `alpha * m^power`; the flight time to 0 diverges iff `power >= 1`.
    Power { alpha: f64, power: f64 },
    /// Positive samples on (0, 1] with a zero sample at m = 0.
    Tabulated(Pchip),
}

impl Velocity {
    pub fn power(alpha: f64, power: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::param("velocity.alpha", "must be positive"));
        }
        if !(power >= 1.0 && power.is_finite()) {
            return Err(Error::param(
                "velocity.power",
                format!("{power} < 1 lets cells leave maturity 0 in finite time"),
            ));
        }
        Ok(Velocity::Power { alpha, power })
    }

    pub fn linear(alpha: f64) -> Result<Self> {
        Self::power(alpha, 1.0)
    }

    pub fn eval(&self, m: f64) -> f64 {
        match self {
            Velocity::Power { alpha, power } => {
                if *power == 1.0 {
                    alpha * m
                } else {
                    alpha * m.max(0.0).powf(*power)
                }
            }
            Velocity::Tabulated(t) => t.eval(m),
        }
    }

    /// V'(m); analytic for the power family, centered table differences otherwise.
    pub fn derivative(&self, m: f64) -> f64 {
        match self {
            Velocity::Power { alpha, power } => {
                if *power == 1.0 {
                    *alpha
                } else {
                    alpha * power * m.max(0.0).powf(power - 1.0)
                }
            }
            Velocity::Tabulated(t) => centered_table_slope(t, m),
        }
    }
}

fn centered_table_slope(t: &Pchip, m: f64) -> f64 {
    let xs = t.nodes();
    let ys = t.values();
    let n = xs.len();
    let slope_at = |k: usize| -> f64 {
        let (a, b) = match k {
            0 => (0, 1),
            k if k == n - 1 => (n - 2, n - 1),
            k => (k - 1, k + 1),
        };
        (ys[b] - ys[a]) / (xs[b] - xs[a])
    };
    let (i, w) = crate::interp::locate(xs, m);
    (1.0 - w) * slope_at(i) + w * slope_at(i + 1)
}

/// Division map g: maturity of each daughter born from a mother of maturity m.
#[derive(Debug, Clone, PartialEq)]
pub enum DivisionMap {
    /// g(m) = slope * m with 0 < slope <= 1.
    Linear { slope: f64 },
    /// Strictly increasing samples on [0, 1].
    Tabulated(Pchip),
}

impl DivisionMap {
    pub fn linear(slope: f64) -> Result<Self> {
        if !(slope > 0.0 && slope <= 1.0) {
            return Err(Error::param("division_map.slope", "must lie in (0, 1]"));
        }
        Ok(DivisionMap::Linear { slope })
    }

    pub fn eval(&self, m: f64) -> f64 {
        match self {
            DivisionMap::Linear { slope } => slope * m,
            DivisionMap::Tabulated(t) => t.eval(m),
        }
    }

    pub fn derivative(&self, m: f64) -> f64 {
        match self {
            DivisionMap::Linear { slope } => *slope,
            DivisionMap::Tabulated(t) => t.derivative(m),
        }
    }

    /// g(1), the largest daughter maturity.
    pub fn top(&self) -> f64 {
        self.eval(1.0)
    }

    /// Inverse clamped to 1 above g(1), with derivative 0 there. At m = g(1)
    /// the left derivative is returned.
    pub fn inverse(&self, m: f64) -> (f64, f64) {
        let top = self.top();
        if m > top {
            return (1.0, 0.0);
        }
        match self {
            DivisionMap::Linear { slope } => (m / slope, 1.0 / slope),
            DivisionMap::Tabulated(t) => {
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if t.eval(mid) < m {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo < 1e-15 {
                        break;
                    }
                }
                let x = 0.5 * (lo + hi);
                let d = t.derivative(x);
                (x, if d > 0.0 { 1.0 / d } else { f64::INFINITY })
            }
        }
    }
}

/// A user-supplied rate β(m, x).
#[derive(Clone)]
pub struct RateFn {
    label: String,
    f: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
}

impl RateFn {
    pub fn new(
        label: impl Into<String>,
        f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for RateFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RateFn({})", self.label)
    }
}

/// Reintroduction rate β(m, x) from the resting into the proliferating phase.
#[derive(Debug, Clone)]
pub enum Reintroduction {
    /// β₀(m) θⁿ(m) / (θⁿ(m) + xⁿ) for x ≥ 0 and β₀(m) for x < 0.
    Hill {
        beta0: Profile,
        theta: Profile,
        exponent: f64,
    },
    Custom(RateFn),
}

impl Reintroduction {
    pub fn hill(
        beta0: impl Into<Profile>,
        theta: impl Into<Profile>,
        exponent: f64,
    ) -> Result<Self> {
        if !(exponent >= 1.0) {
            return Err(Error::param("hill.exponent", "must be >= 1"));
        }
        Ok(Reintroduction::Hill {
            beta0: beta0.into(),
            theta: theta.into(),
            exponent,
        })
    }

    pub fn custom(label: &str, f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Reintroduction::Custom(RateFn::new(label, f))
    }

    #[inline]
    pub fn eval(&self, m: f64, x: f64) -> f64 {
        match self {
            Reintroduction::Hill {
                beta0,
                theta,
                exponent,
            } => {
                let b0 = beta0.eval(m);
                if x <= 0.0 {
                    return b0;
                }
                let th = theta.eval(m);
                let (tn, xn) = if *exponent == 2.0 {
                    (th * th, x * x)
                } else if *exponent == 1.0 {
                    (th, x)
                } else {
                    (th.powf(*exponent), x.powf(*exponent))
                };
                b0 * tn / (tn + xn)
            }
            Reintroduction::Custom(r) => (r.f)(m, x),
        }
    }

    /// x ↦ x β(m, x).
    #[inline]
    pub fn flux(&self, m: f64, x: f64) -> f64 {
        x * self.eval(m, x)
    }

    pub fn is_hill(&self) -> bool {
        matches!(self, Reintroduction::Hill { .. })
    }

    /// Lipschitz constant of x ↦ xβ(m,x) on |x| < radius, uniformly over
    /// the maturity grid. Hill rates use the closed form
    /// sup β₀ · max(1, (n−1)²/(4n)); other rates fall back to sampled
    /// difference quotients and are flagged empirical.
    pub fn lipschitz(&self, radius: f64, grid: &[f64]) -> LipschitzEstimate {
        match self {
            Reintroduction::Hill {
                beta0, exponent, ..
            } => {
                let sup_b0 = grid
                    .iter()
                    .map(|&m| beta0.eval(m).abs())
                    .fold(0.0, f64::max);
                let n = *exponent;
                let factor = ((n - 1.0) * (n - 1.0) / (4.0 * n)).max(1.0);
                LipschitzEstimate {
                    constant: sup_b0 * factor,
                    empirical: false,
                }
            }
            Reintroduction::Custom(_) => {
                let samples = 400usize;
                let h = 2.0 * radius / samples as f64;
                let mut worst = 0.0f64;
                for &m in grid {
                    let mut prev = self.flux(m, -radius);
                    for k in 1..=samples {
                        let x = -radius + h * k as f64;
                        let cur = self.flux(m, x);
                        worst = worst.max(((cur - prev) / h).abs());
                        prev = cur;
                    }
                }
                LipschitzEstimate {
                    constant: worst,
                    empirical: true,
                }
            }
        }
    }

    /// Uniform bound on |β| over the grid if one exists (Hill: sup β₀).
    pub fn uniform_bound(&self, grid: &[f64]) -> Option<f64> {
        match self {
            Reintroduction::Hill { beta0, .. } => Some(
                grid.iter()
                    .map(|&m| beta0.eval(m).abs())
                    .fold(0.0, f64::max),
            ),
            Reintroduction::Custom(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LipschitzEstimate {
    pub constant: f64,
    pub empirical: bool,
}

/// The full coefficient set of the model.
#[derive(Debug, Clone)]
pub struct ModelCoefficients {
    pub velocity: Velocity,
    pub division_age: Profile,
    pub division_map: DivisionMap,
    pub resting_loss: Profile,
    pub apoptosis: Profile,
    pub reintroduction: Reintroduction,
}

impl ModelCoefficients {
    /// β(m, x).
    pub fn beta(&self, m: f64, x: f64) -> f64 {
        self.reintroduction.eval(m, x)
    }

    pub fn tau(&self, m: f64) -> f64 {
        self.division_age.eval(m)
    }
}

/// β(m, x) for the given coefficients.
pub fn eval_beta(coeffs: &ModelCoefficients, m: f64, x: f64) -> f64 {
    coeffs.beta(m, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// Not checkable for this representation; taken on trust.
    Assumed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: &'static str,
    pub status: CheckStatus,
    /// Maturity of the worst offending (or tightest) grid point.
    pub worst_m: Option<f64>,
    /// Value of the checked quantity there.
    pub worst_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub grid_resolution: usize,
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != CheckStatus::Fail)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks
            .iter()
            .filter(|c| c.status == CheckStatus::Fail)
            .map(|c| c.name)
            .collect()
    }

    pub fn into_result(self) -> Result<Self> {
        if self.passed() {
            Ok(self)
        } else {
            Err(Error::Validation(format!(
                "failed checks: {}",
                self.failures().join(", ")
            )))
        }
    }
}

/// Evaluate the structural hypotheses on a uniform grid of
/// `grid_resolution` points in (0, 1] (plus m = 0 where meaningful).
pub fn validate_coefficients(
    coeffs: &ModelCoefficients,
    grid_resolution: usize,
) -> Result<ValidationReport> {
    if grid_resolution < 2 {
        return Err(Error::param("grid_resolution", "need at least 2 points"));
    }
    let grid: Vec<f64> = (1..=grid_resolution)
        .map(|k| k as f64 / grid_resolution as f64)
        .collect();
    let mut checks = Vec::new();

    // V(0) = 0 and V > 0 on (0, 1].
    let v0 = coeffs.velocity.eval(0.0);
    let (vm, vmin) = argmin(&grid, |m| coeffs.velocity.eval(m));
    let vel_ok = v0 == 0.0 && vmin > 0.0;
    checks.push(HypothesisCheck {
        name: "velocity_positive",
        status: status(vel_ok),
        worst_m: Some(if v0 != 0.0 { 0.0 } else { vm }),
        worst_value: if v0 != 0.0 { v0 } else { vmin },
    });

    // Flight time to 0 diverges.
    checks.push(match coeffs.velocity {
        Velocity::Power { alpha, power } => HypothesisCheck {
            name: "flight_time_divergence",
            status: status(power >= 1.0 && alpha > 0.0),
            worst_m: None,
            worst_value: power,
        },
        Velocity::Tabulated(_) => HypothesisCheck {
            name: "flight_time_divergence",
            status: CheckStatus::Assumed,
            worst_m: None,
            worst_value: f64::NAN,
        },
    });

    // τ > 0 on [0, 1].
    let mut tau_grid = vec![0.0];
    tau_grid.extend_from_slice(&grid);
    let (tm, tmin) = argmin(&tau_grid, |m| coeffs.tau(m));
    checks.push(HypothesisCheck {
        name: "division_age_positive",
        status: status(tmin > 0.0),
        worst_m: Some(tm),
        worst_value: tmin,
    });

    // τ'(m) + 1/V(m) > 0 on (0, 1].
    let (cm, cmin) = argmin(&grid, |m| {
        coeffs.division_age.derivative(m) + 1.0 / coeffs.velocity.eval(m)
    });
    checks.push(HypothesisCheck {
        name: "commitment_condition",
        status: status(cmin > 0.0),
        worst_m: Some(cm),
        worst_value: cmin,
    });

    // g strictly increasing on [0, 1].
    let (gm, gmin) = argmin(&grid, |m| {
        let prev = m - 1.0 / grid_resolution as f64;
        coeffs.division_map.eval(m) - coeffs.division_map.eval(prev)
    });
    checks.push(HypothesisCheck {
        name: "division_map_increasing",
        status: status(gmin > 0.0),
        worst_m: Some(gm),
        worst_value: gmin,
    });

    // g(m) <= m.
    let (dm, dmin) = argmin(&tau_grid, |m| m - coeffs.division_map.eval(m));
    checks.push(HypothesisCheck {
        name: "division_map_below_identity",
        status: status(dmin >= 0.0),
        worst_m: Some(dm),
        worst_value: dmin,
    });

    Ok(ValidationReport {
        grid_resolution,
        checks,
    })
}

fn status(ok: bool) -> CheckStatus {
    if ok {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    }
}

fn argmin(grid: &[f64], f: impl Fn(f64) -> f64) -> (f64, f64) {
    grid.iter()
        .map(|&m| (m, f(m)))
        .fold((f64::NAN, f64::INFINITY), |best, cur| {
            if cur.1 < best.1 || cur.1.is_nan() {
                cur
            } else {
                best
            }
        })
}

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SurfaceFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Age-integrated initial resting density μ̄(m) and the initial
/// proliferating surface Γ(m, a).
#[derive(Clone)]
pub struct InitialData {
    label: String,
    mu_bar: ScalarFn,
    gamma: SurfaceFn,
}

impl fmt::Debug for InitialData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InitialData")
            .field("label", &self.label)
            .finish()
    }
}

impl InitialData {
    pub fn new(
        label: impl Into<String>,
        mu_bar: impl Fn(f64) -> f64 + Send + Sync + 'static,
        gamma: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            mu_bar: Arc::new(mu_bar),
            gamma: Arc::new(gamma),
        }
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0, |_, _| 0.0)
    }

    /// Γ(m, a) = β(m, μ̄(m)) μ̄(m) · shape(m, a) with shape(m, 0) = 1, which
    /// meets the compatibility condition by construction.
    pub fn compatible_with_shape(
        label: impl Into<String>,
        coeffs: &ModelCoefficients,
        mu_bar: impl Fn(f64) -> f64 + Send + Sync + 'static,
        shape: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        let beta = coeffs.reintroduction.clone();
        let mu: ScalarFn = Arc::new(mu_bar);
        let mu2 = mu.clone();
        Self {
            label: label.into(),
            mu_bar: mu,
            gamma: Arc::new(move |m, a| {
                let x = mu2(m);
                beta.eval(m, x) * x * shape(m, a)
            }),
        }
    }

    /// Compatible data with Γ constant in age.
    pub fn compatible(
        label: impl Into<String>,
        coeffs: &ModelCoefficients,
        mu_bar: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self::compatible_with_shape(label, coeffs, mu_bar, |_, _| 1.0)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    #[inline]
    pub fn mu_bar(&self, m: f64) -> f64 {
        (self.mu_bar)(m)
    }

    #[inline]
    pub fn gamma(&self, m: f64, a: f64) -> f64 {
        (self.gamma)(m, a)
    }

    /// Γ̄(m) = ∫₀^{age_limit} Γ(m, a) da, with `age_limit = τ(Θ(m))`.
    pub fn gamma_bar(&self, m: f64, age_limit: f64) -> f64 {
        thread_local! {
            static RULE: GaussRule = GaussRule::new(16);
        }
        RULE.with(|r| r.integrate(0.0, age_limit, |a| self.gamma(m, a)))
    }

    /// Same data scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mu = self.mu_bar.clone();
        let g = self.gamma.clone();
        Self {
            label: format!("{}*{factor}", self.label),
            mu_bar: Arc::new(move |m| factor * mu(m)),
            gamma: Arc::new(move |m, a| factor * g(m, a)),
        }
    }

    /// μ̄ shifted by a constant, Γ unchanged.
    pub fn with_mu_shift(&self, shift: f64) -> Self {
        let mu = self.mu_bar.clone();
        Self {
            label: format!("{}+{shift}", self.label),
            mu_bar: Arc::new(move |m| mu(m) + shift),
            gamma: self.gamma.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompatReport {
    /// max over the grid of |Γ(m,0) − β(m,μ̄)μ̄| / |β(m,μ̄)μ̄| (absolute
    /// deviation where the right-hand side vanishes).
    pub max_deviation: f64,
    pub worst_m: f64,
    pub passed: bool,
}

/// Check Γ(m, 0) = β(m, μ̄(m)) μ̄(m) on a uniform grid. A failure is a
/// warning: existence does not depend on it.
pub fn check_compatibility(
    data: &InitialData,
    coeffs: &ModelCoefficients,
    grid_resolution: usize,
    tol: f64,
) -> CompatReport {
    let n = grid_resolution.max(2);
    let mut worst = (0.0, 0.0f64);
    for k in 0..=n {
        let m = k as f64 / n as f64;
        let mu = data.mu_bar(m);
        let rhs = coeffs.beta(m, mu) * mu;
        let diff = (data.gamma(m, 0.0) - rhs).abs();
        let dev = if rhs != 0.0 { diff / rhs.abs() } else { diff };
        if dev > worst.1 || dev.is_nan() {
            worst = (m, dev);
        }
    }
    CompatReport {
        max_deviation: worst.1,
        worst_m: worst.0,
        passed: worst.1 <= tol,
    }
}
