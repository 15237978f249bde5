//! Commitment maturity Θ, the daughter-to-mother map Δ, the clamped inverse
//! division map and the algebraic factors π and ζ.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{CharacteristicFlow, Mortality, SurvivalKernel};
use crate::grid::MaturityGrid;
use crate::interp::{LinearTable, Pchip, SplitPchip};
use crate::model::{DivisionMap, ModelCoefficients, Profile};

const BISECTION_CAP: usize = 80;

/// Exact (root-finding) evaluation of the commitment maps.
#[derive(Debug, Clone)]
pub struct CommitmentBuilder {
    coeffs: ModelCoefficients,
    flow: CharacteristicFlow,
    proliferating: SurvivalKernel,
    tau_range: (f64, f64),
}

impl CommitmentBuilder {
    pub fn new(coeffs: &ModelCoefficients) -> Self {
        let flow = CharacteristicFlow::new(coeffs.velocity.clone());
        Self::with_flow(coeffs, flow)
    }

    pub fn with_flow(coeffs: &ModelCoefficients, flow: CharacteristicFlow) -> Self {
        let proliferating = SurvivalKernel::new(
            flow.clone(),
            coeffs.apoptosis.clone(),
            Mortality::Proliferating,
        );
        let (lo, hi) = (0..=1000)
            .map(|k| coeffs.tau(k as f64 / 1000.0))
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), t| {
                (lo.min(t), hi.max(t))
            });
        Self {
            coeffs: coeffs.clone(),
            flow,
            proliferating,
            tau_range: (lo, hi),
        }
    }

    pub fn flow(&self) -> &CharacteristicFlow {
        &self.flow
    }

    pub fn coefficients(&self) -> &ModelCoefficients {
        &self.coeffs
    }

    /// Θ(m): the root x ∈ (0, m) of time_of_flight(x, m) = τ(x); Θ(0) = 0.
    pub fn theta(&self, m: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::param("m", format!("{m} outside [0, 1]")));
        }
        if m == 0.0 {
            return Ok(0.0);
        }
        let h =
            |x: f64| -> Result<f64> { Ok(self.flow.time_of_flight(x, m)? - self.coeffs.tau(x)) };
        // Θ = χ(−τ(Θ), m) lies between χ(−τ_max, m) and m.
        let mut lo = self.flow.chi(-1.01 * self.tau_range.1, m)?.min(m * 0.999);
        let mut widen = 0;
        while h(lo)? <= 0.0 {
            lo *= 0.5;
            widen += 1;
            if widen > 1100 || lo == 0.0 {
                return Err(Error::Bracket {
                    m,
                    reason: "no sign change in (0, m); check τ' + 1/V > 0".into(),
                });
            }
        }
        let mut hi = m;
        if h(hi)? >= 0.0 {
            return Err(Error::Bracket {
                m,
                reason: format!("τ({m}) is not positive"),
            });
        }
        for _ in 0..BISECTION_CAP {
            let mid = 0.5 * (lo + hi);
            if h(mid)? > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * m {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// (g⁻¹(m), (g⁻¹)'(m)), clamped to (1, 0) above g(1).
    pub fn g_inverse(&self, m: f64) -> (f64, f64) {
        self.coeffs.division_map.inverse(m)
    }

    /// Δ(m) = Θ(g⁻¹(m)).
    pub fn delta_map(&self, m: f64) -> Result<f64> {
        self.theta(self.g_inverse(m).0)
    }

    /// π(m) = 1 / (1 + V(Θ(m)) τ'(Θ(m))).
    pub fn pi(&self, m: f64) -> Result<f64> {
        let th = self.theta(m)?;
        Ok(pi_at(&self.coeffs, th))
    }

    /// ζ(m) = 2 (g⁻¹)'(m) ξ(τ(Δ(m)), g⁻¹(m)).
    pub fn zeta(&self, m: f64) -> Result<f64> {
        let (ginv, dginv) = self.g_inverse(m);
        if dginv == 0.0 {
            return Ok(0.0);
        }
        let delta = self.theta(ginv)?;
        Ok(2.0 * dginv * self.proliferating.eval(self.coeffs.tau(delta), ginv)?)
    }

    /// Tabulate every map on `grid` (with g(1) merged in).
    pub fn build(&self, grid: &MaturityGrid) -> Result<CommitmentMaps> {
        let dm = &self.coeffs.division_map;
        let top = dm.top();
        let grid = grid.with_points(&[top]);
        let xs = grid.nodes();
        let theta: Vec<f64> = xs.iter().map(|&m| self.theta(m)).collect::<Result<_>>()?;
        for (&m, &t) in xs.iter().zip(&theta).skip(1) {
            if !(t > 0.0 && t < m) {
                return Err(Error::Bracket {
                    m,
                    reason: format!("Θ = {t} violates 0 < Θ < m"),
                });
            }
        }
        let theta_table = Pchip::new(xs.to_vec(), theta.clone())?;
        let theta_one = *theta.last().unwrap();

        let mut delta = Vec::with_capacity(xs.len());
        let mut zeta = Vec::with_capacity(xs.len());
        let mut kappa = 0.0f64;
        for &m in xs {
            let (ginv, dginv) = dm.inverse(m);
            let d = if m > top {
                theta_one
            } else {
                theta_table.eval(ginv).clamp(0.0, 1.0)
            };
            kappa = kappa.max(dginv.abs());
            delta.push(d);
            zeta.push(if dginv == 0.0 {
                0.0
            } else {
                2.0 * dginv * self.proliferating.eval(self.coeffs.tau(d), ginv)?
            });
        }
        let zeta_table = SplitPchip::new(xs, &zeta, top, 0.0)?;
        let pi: Vec<f64> = theta.iter().map(|&t| pi_at(&self.coeffs, t)).collect();
        let pi_table = LinearTable::new(xs.to_vec(), pi)?;

        let tau_max = xs
            .iter()
            .copied()
            .chain((0..=1000).map(|k| k as f64 / 1000.0))
            .map(|m| self.coeffs.tau(m))
            .fold(0.0, f64::max);
        let tau_delta_min = delta
            .iter()
            .map(|&d| self.coeffs.tau(d))
            .fold(f64::INFINITY, f64::min);
        if !(tau_delta_min > 0.0) {
            return Err(Error::Validation(format!(
                "min τ(Δ(m)) = {tau_delta_min} is not positive"
            )));
        }
        let zeta_sup = zeta.iter().fold(0.0f64, |a, z| a.max(z.abs()));
        Ok(CommitmentMaps {
            nodes: xs.to_vec(),
            theta: theta_table,
            pi: pi_table,
            zeta: zeta_table,
            division_map: dm.clone(),
            tau: self.coeffs.division_age.clone(),
            tau_max,
            tau_delta_min,
            zeta_sup,
            kappa,
            g_top: top,
        })
    }

    /// Table grid used when none is given: graded toward 0, 1000 nodes.
    pub fn default_grid() -> MaturityGrid {
        MaturityGrid::graded(1000, 1e-6).expect("valid default grid")
    }
}

fn pi_at(coeffs: &ModelCoefficients, theta: f64) -> f64 {
    1.0 / (1.0 + coeffs.velocity.eval(theta) * coeffs.division_age.derivative(theta))
}

/// Tabulated commitment maps with cheap off-grid evaluation.
#[derive(Debug, Clone)]
pub struct CommitmentMaps {
    nodes: Vec<f64>,
    theta: Pchip,
    pi: LinearTable,
    zeta: SplitPchip,
    division_map: DivisionMap,
    tau: Profile,
    pub tau_max: f64,
    pub tau_delta_min: f64,
    /// sup |ζ| over the table nodes.
    pub zeta_sup: f64,
    /// sup |(g⁻¹)'| over the table nodes.
    pub kappa: f64,
    /// g(1).
    pub g_top: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapRow {
    pub m: f64,
    pub theta: f64,
    pub delta: f64,
    pub g_inverse: f64,
    pub g_inverse_derivative: f64,
    pub pi: f64,
    pub zeta: f64,
}

impl CommitmentMaps {
    #[inline]
    pub fn theta(&self, m: f64) -> f64 {
        if m <= 0.0 {
            0.0
        } else {
            self.theta.eval(m)
        }
    }

    /// Θ table composed with the exact clamped inverse of g.
    #[inline]
    pub fn delta(&self, m: f64) -> f64 {
        if m <= 0.0 {
            0.0
        } else {
            self.theta(self.division_map.inverse(m).0)
        }
    }

    #[inline]
    pub fn g_inverse(&self, m: f64) -> (f64, f64) {
        self.division_map.inverse(m)
    }

    #[inline]
    pub fn pi(&self, m: f64) -> f64 {
        self.pi.eval(m)
    }

    /// Left-continuous at g(1); zero above it.
    #[inline]
    pub fn zeta(&self, m: f64) -> f64 {
        self.zeta.eval(m)
    }

    /// τ(Θ(m)), the age at division of a cell dividing at maturity m.
    #[inline]
    pub fn tau_theta(&self, m: f64) -> f64 {
        self.tau.eval(self.theta(m))
    }

    /// τ(Δ(m)), the age at division of the mother of a daughter born at m.
    #[inline]
    pub fn tau_delta(&self, m: f64) -> f64 {
        self.tau.eval(self.delta(m))
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn rows(&self) -> Vec<MapRow> {
        self.nodes
            .iter()
            .map(|&m| {
                let (g, dg) = self.g_inverse(m);
                MapRow {
                    m,
                    theta: self.theta(m),
                    delta: self.delta(m),
                    g_inverse: g,
                    g_inverse_derivative: dg,
                    pi: self.pi(m),
                    zeta: self.zeta(m),
                }
            })
            .collect()
    }
}
