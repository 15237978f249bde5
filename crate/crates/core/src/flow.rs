//! Backward characteristics of dχ/ds = V(χ), flight times between
//! maturities, and the survival kernels attenuating densities along them.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Profile, Velocity};
use crate::quadrature::{adaptive, CompositeGauss};

/// Below this maturity the numeric backend freezes V(χ)/χ over each step.
const FROZEN_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowBackend {
    /// Closed forms of the power family.
    Analytic,
    /// Adaptive Dormand–Prince integration and adaptive flight-time quadrature.
    Numeric,
}

#[derive(Debug, Clone)]
pub struct CharacteristicFlow {
    velocity: Velocity,
    backend: FlowBackend,
    tolerance: f64,
}

impl CharacteristicFlow {
    /// Analytic backend for the power family, numeric otherwise.
    pub fn new(velocity: Velocity) -> Self {
        let backend = match velocity {
            Velocity::Power { .. } => FlowBackend::Analytic,
            Velocity::Tabulated(_) => FlowBackend::Numeric,
        };
        Self {
            velocity,
            backend,
            tolerance: 1e-12,
        }
    }

    pub fn with_backend(velocity: Velocity, backend: FlowBackend) -> Result<Self> {
        if backend == FlowBackend::Analytic && !matches!(velocity, Velocity::Power { .. }) {
            return Err(Error::param(
                "flow.backend",
                "the analytic backend needs a power-family velocity",
            ));
        }
        Ok(Self {
            velocity,
            backend,
            tolerance: 1e-12,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn backend(&self) -> FlowBackend {
        self.backend
    }

    pub fn velocity(&self) -> &Velocity {
        &self.velocity
    }

    /// χ(s, m) for s ≤ 0: the maturity at time s of the cell that has
    /// maturity m at time 0.
    pub fn chi(&self, s: f64, m: f64) -> Result<f64> {
        if s > 0.0 {
            return Err(Error::param(
                "s",
                format!("forward flow requested (s = {s})"),
            ));
        }
        if s == 0.0 || m <= 0.0 {
            return Ok(m.max(0.0));
        }
        match (self.backend, &self.velocity) {
            (FlowBackend::Analytic, Velocity::Power { alpha, power }) => {
                Ok(power_chi(*alpha, *power, s, m))
            }
            _ => self.chi_numeric(-s, m),
        }
    }

    /// ∫_{m1}^{m2} ds / V(s).
    pub fn time_of_flight(&self, m1: f64, m2: f64) -> Result<f64> {
        if m1 <= 0.0 {
            return Err(Error::DivergentFlight);
        }
        if m2 < m1 {
            return Err(Error::param("m2", format!("{m2} < m1 = {m1}")));
        }
        if m1 == m2 {
            return Ok(0.0);
        }
        match (self.backend, &self.velocity) {
            (FlowBackend::Analytic, Velocity::Power { alpha, power }) => {
                Ok(power_flight(*alpha, *power, m1, m2))
            }
            _ => {
                let v = &self.velocity;
                adaptive(m1.ln(), m2.ln(), self.tolerance, |u| {
                    let s = u.exp();
                    s / v.eval(s)
                })
            }
        }
    }

    fn chi_numeric(&self, horizon: f64, m: f64) -> Result<f64> {
        // Integrate y' = -V(y) over σ ∈ [0, horizon], σ = -s.
        let f = |y: f64| -self.velocity.eval(y.max(0.0));
        let rtol = self.tolerance;
        let atol = self.tolerance * 1e-3;
        let mut sigma = 0.0;
        let mut y = m;
        let mut h = (horizon / 16.0).min(0.1);
        let mut steps = 0usize;
        while sigma < horizon {
            if y < FROZEN_THRESHOLD {
                let rate = self.velocity.eval(y) / y;
                let remaining = horizon - sigma;
                let dt = remaining.min(1.0);
                y *= (-rate * dt).exp();
                sigma += dt;
                continue;
            }
            let remaining = horizon - sigma;
            let last = h >= remaining;
            let step = if last { remaining } else { h };
            let (y_new, err) = dopri_step(&f, y, step);
            let scale = atol + rtol * y.abs().max(y_new.abs());
            let ratio = err / scale;
            if ratio <= 1.0 {
                y = y_new;
                if last {
                    break;
                }
                sigma += step;
            }
            let factor = if ratio == 0.0 {
                5.0
            } else {
                (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0)
            };
            h = step * factor;
            steps += 1;
            if steps > 1_000_000 || h < 1e-14 * horizon.max(1.0) {
                return Err(Error::FlowIntegration {
                    s: -sigma,
                    m,
                    reason: format!("step size collapsed to {h:e}"),
                });
            }
        }
        Ok(y.clamp(0.0, m))
    }
}

fn power_chi(alpha: f64, power: f64, s: f64, m: f64) -> f64 {
    if power == 1.0 {
        m * (alpha * s).exp()
    } else {
        let q = power - 1.0;
        (m.powf(-q) - q * alpha * s).powf(-1.0 / q)
    }
}

fn power_flight(alpha: f64, power: f64, m1: f64, m2: f64) -> f64 {
    if power == 1.0 {
        (m2 / m1).ln() / alpha
    } else {
        let q = power - 1.0;
        (m1.powf(-q) - m2.powf(-q)) / (q * alpha)
    }
}

/// One Dormand–Prince 5(4) step; returns the 5th-order value and the
/// embedded error estimate.
fn dopri_step(f: &impl Fn(f64) -> f64, y: f64, h: f64) -> (f64, f64) {
    let k1 = f(y);
    let k2 = f(y + h * (k1 / 5.0));
    let k3 = f(y + h * (3.0 / 40.0 * k1 + 9.0 / 40.0 * k2));
    let k4 = f(y + h * (44.0 / 45.0 * k1 - 56.0 / 15.0 * k2 + 32.0 / 9.0 * k3));
    let k5 = f(y + h
        * (19372.0 / 6561.0 * k1 - 25360.0 / 2187.0 * k2 + 64448.0 / 6561.0 * k3
            - 212.0 / 729.0 * k4));
    let k6 = f(y + h
        * (9017.0 / 3168.0 * k1 - 355.0 / 33.0 * k2 + 46732.0 / 5247.0 * k3 + 49.0 / 176.0 * k4
            - 5103.0 / 18656.0 * k5));
    let y5 = y + h
        * (35.0 / 384.0 * k1 + 500.0 / 1113.0 * k3 + 125.0 / 192.0 * k4 - 2187.0 / 6784.0 * k5
            + 11.0 / 84.0 * k6);
    let k7 = f(y5);
    let err = h
        * (71.0 / 57600.0 * k1 - 71.0 / 16695.0 * k3 + 71.0 / 1920.0 * k4
            - 17253.0 / 339200.0 * k5
            + 22.0 / 525.0 * k6
            - 1.0 / 40.0 * k7);
    (y5, err.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mortality {
    /// δ + V', the resting-phase kernel K.
    Resting,
    /// γ + V', the proliferating-phase kernel ξ.
    Proliferating,
}

/// exp{−∫₀ᵗ [rate(χ(−s,m)) + V'(χ(−s,m))] ds}.
#[derive(Debug, Clone)]
pub struct SurvivalKernel {
    flow: CharacteristicFlow,
    rate: Profile,
    kind: Mortality,
    quadrature: CompositeGauss,
}

impl SurvivalKernel {
    pub fn new(flow: CharacteristicFlow, rate: Profile, kind: Mortality) -> Self {
        Self {
            flow,
            rate,
            kind,
            quadrature: CompositeGauss::default(),
        }
    }

    pub fn with_quadrature(mut self, quadrature: CompositeGauss) -> Self {
        self.quadrature = quadrature;
        self
    }

    pub fn kind(&self) -> Mortality {
        self.kind
    }

    pub fn flow(&self) -> &CharacteristicFlow {
        &self.flow
    }

    /// The attenuation rate rate(x) + V'(x) at maturity x.
    #[inline]
    pub fn mortality(&self, x: f64) -> f64 {
        self.rate.eval(x) + self.flow.velocity().derivative(x)
    }

    pub fn eval(&self, t: f64, m: f64) -> Result<f64> {
        if t < 0.0 {
            return Err(Error::param("t", format!("negative kernel time {t}")));
        }
        if t == 0.0 {
            return Ok(1.0);
        }
        let exponent = if self.rate.is_constant() {
            if let Velocity::Power { power, .. } = self.flow.velocity() {
                if *power == 1.0 {
                    // constant integrand
                    Some(self.mortality(m) * t)
                } else {
                    None
                }
            } else {
                None
            }
        } else {
            None
        };
        let exponent = match exponent {
            Some(e) => e,
            None => self
                .quadrature
                .try_integrate(0.0, t, |s| Ok(self.mortality(self.flow.chi(-s, m)?)))?,
        };
        let k = (-exponent).exp();
        if !k.is_finite() {
            return Err(Error::NonFinite { t, m });
        }
        Ok(k)
    }

    /// inf over the grid of rate + V'.
    pub fn infimum_rate(&self, grid: &[f64]) -> f64 {
        grid.iter()
            .map(|&m| self.mortality(m))
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn linear() -> CharacteristicFlow {
        CharacteristicFlow::new(Velocity::linear(0.2).unwrap())
    }

    #[test]
    fn chi_basic_values() {
        let f = linear();
        assert_eq!(f.chi(0.0, 0.5).unwrap(), 0.5);
        assert_eq!(f.chi(-3.0, 0.0).unwrap(), 0.0);
        let v = f.chi(-1.0, 0.5).unwrap();
        assert!((v - 0.5 * (-0.2f64).exp()).abs() < 1e-15);
        assert!((v - 0.409365).abs() < 1e-6);
        assert!(f.chi(0.5, 0.5).is_err());
    }

    #[test]
    fn flight_time_values() {
        let f = linear();
        assert_eq!(f.time_of_flight(0.7, 0.7).unwrap(), 0.0);
        let t = f.time_of_flight(0.5, 1.0).unwrap();
        assert!((t - 2f64.ln() / 0.2).abs() < 1e-14);
        assert!((t - 3.465736).abs() < 1e-6);
        let back = f.chi(-f.time_of_flight(0.25, 0.75).unwrap(), 0.75).unwrap();
        assert!((back - 0.25).abs() < 1e-10);
        assert_eq!(f.time_of_flight(0.0, 0.5), Err(Error::DivergentFlight));
    }

    #[test]
    fn numeric_backend_matches_closed_forms() {
        for power in [1.0, 1.5, 2.0] {
            let v = Velocity::power(0.3, power).unwrap();
            let exact = CharacteristicFlow::new(v.clone());
            let num = CharacteristicFlow::with_backend(v, FlowBackend::Numeric).unwrap();
            for &s in &[-0.1, -1.0, -3.0, -7.5] {
                for &m in &[1e-9, 1e-4, 0.05, 0.3, 0.77, 1.0] {
                    let a = exact.chi(s, m).unwrap();
                    let b = num.chi(s, m).unwrap();
                    assert!((a - b).abs() < 1e-7, "p={power} s={s} m={m}: {a} vs {b}");
                }
            }
            for &(m1, m2) in &[(0.01, 0.02), (0.1, 1.0), (1e-4, 0.5)] {
                let a = exact.time_of_flight(m1, m2).unwrap();
                let b = num.time_of_flight(m1, m2).unwrap();
                assert!((a - b).abs() < 1e-7 * a.max(1.0), "{a} vs {b}");
            }
        }
    }

    #[test]
    fn analytic_backend_requires_power_family() {
        let xs = vec![0.0, 0.5, 1.0];
        let t = crate::interp::Pchip::new(xs, vec![0.0, 0.1, 0.2]).unwrap();
        let v = Velocity::Tabulated(t);
        assert!(CharacteristicFlow::with_backend(v.clone(), FlowBackend::Analytic).is_err());
        assert_eq!(CharacteristicFlow::new(v).backend(), FlowBackend::Numeric);
    }

    #[test]
    fn kernel_closed_forms() {
        let k = SurvivalKernel::new(linear(), Profile::Constant(0.05), Mortality::Resting);
        assert_eq!(k.eval(0.0, 0.3).unwrap(), 1.0);
        for &m in &[0.0, 0.2, 0.9] {
            assert!((k.eval(2.0, m).unwrap() - (-0.5f64).exp()).abs() < 1e-15);
        }
        let xi = SurvivalKernel::new(linear(), Profile::Constant(0.1), Mortality::Proliferating);
        assert!((xi.eval(1.0, 0.6).unwrap() - 0.740818).abs() < 1e-6);
    }

    #[test]
    fn quadrature_kernel_matches_closed_form_for_affine_rate() {
        // rate = 0.1 + 0.2 m along χ(-s,m) = m e^{-0.2 s}:
        // ∫₀ᵗ (0.1 + 0.2 + 0.2 m e^{-0.2 s}) ds = 0.3 t + m (1 - e^{-0.2 t})
        let rate = Profile::Affine {
            intercept: 0.1,
            slope: 0.2,
        };
        let k = SurvivalKernel::new(linear(), rate, Mortality::Proliferating);
        for &(t, m) in &[(0.5f64, 0.4f64), (3.0, 1.0), (7.2, 0.01)] {
            let exact = (-(0.3 * t + m * (1.0 - (-0.2 * t).exp()))).exp();
            assert!((k.eval(t, m).unwrap() - exact).abs() < 1e-14);
        }
    }

    fn rate_profile() -> Profile {
        Profile::Affine {
            intercept: 0.05,
            slope: 0.3,
        }
    }

    proptest! {
        #[test]
        fn analytic_semigroup(t1 in 0.0f64..5.0, t2 in 0.0f64..5.0, m in 0.0f64..=1.0, p in 1.0f64..2.5) {
            let f = CharacteristicFlow::new(Velocity::power(0.25, p).unwrap());
            let lhs = f.chi(-(t1 + t2), m).unwrap();
            let rhs = f.chi(-t1, f.chi(-t2, m).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn numeric_semigroup(t1 in 0.0f64..4.0, t2 in 0.0f64..4.0, m in 0.0f64..=1.0) {
            let f = CharacteristicFlow::with_backend(Velocity::power(0.25, 1.5).unwrap(), FlowBackend::Numeric).unwrap();
            let lhs = f.chi(-(t1 + t2), m).unwrap();
            let rhs = f.chi(-t1, f.chi(-t2, m).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-6);
        }

        #[test]
        fn chi_monotone_in_m(s in -6.0f64..0.0, m1 in 1e-6f64..1.0, dm in 1e-6f64..0.5) {
            let f = CharacteristicFlow::new(Velocity::power(0.4, 1.3).unwrap());
            let m2 = (m1 + dm).min(1.0);
            prop_assume!(m2 > m1);
            prop_assert!(f.chi(s, m1).unwrap() < f.chi(s, m2).unwrap());
            prop_assert!(f.chi(s, m1).unwrap() <= m1);
        }

        #[test]
        fn kernel_cocycle(t1 in 0.0f64..4.0, t2 in 0.0f64..4.0, m in 0.0f64..=1.0) {
            let k = SurvivalKernel::new(CharacteristicFlow::new(Velocity::power(0.2, 1.5).unwrap()),
                                        rate_profile(), Mortality::Resting);
            let lhs = k.eval(t1 + t2, m).unwrap();
            let rhs = k.eval(t1, m).unwrap() * k.eval(t2, k.flow().chi(-t1, m).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn numeric_kernel_cocycle(t1 in 0.0f64..3.0, t2 in 0.0f64..3.0, m in 0.0f64..=1.0) {
            let flow = CharacteristicFlow::with_backend(Velocity::power(0.2, 1.5).unwrap(), FlowBackend::Numeric).unwrap();
            let k = SurvivalKernel::new(flow, rate_profile(), Mortality::Resting);
            let lhs = k.eval(t1 + t2, m).unwrap();
            let rhs = k.eval(t1, m).unwrap() * k.eval(t2, k.flow().chi(-t1, m).unwrap()).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-6);
        }

        #[test]
        fn kernel_bounded_by_infimum_rate(t in 0.0f64..8.0, m in 0.0f64..=1.0) {
            let k = SurvivalKernel::new(CharacteristicFlow::new(Velocity::power(0.2, 1.5).unwrap()),
                                        rate_profile(), Mortality::Resting);
            let grid: Vec<f64> = (0..=1000).map(|j| j as f64 / 1000.0).collect();
            let inf = k.infimum_rate(&grid);
            prop_assert!(k.eval(t, m).unwrap() <= (-inf * t).exp() * (1.0 + 1e-12));
        }
    }
}
