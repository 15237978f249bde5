//! A validated coefficient set bundled with its initial data, flow, kernels
//! and commitment tables.

use crate::commitment::{CommitmentBuilder, CommitmentMaps};
use crate::error::Result;
use crate::flow::{CharacteristicFlow, Mortality, SurvivalKernel};
use crate::grid::MaturityGrid;
use crate::model::{validate_coefficients, InitialData, ModelCoefficients, ValidationReport};

pub const VALIDATION_RESOLUTION: usize = 1000;

#[derive(Debug, Clone)]
pub struct Problem {
    coeffs: ModelCoefficients,
    data: InitialData,
    flow: CharacteristicFlow,
    resting: SurvivalKernel,
    proliferating: SurvivalKernel,
    builder: CommitmentBuilder,
    maps: CommitmentMaps,
    validation: ValidationReport,
}

impl Problem {
    pub fn new(coeffs: ModelCoefficients, data: InitialData) -> Result<Self> {
        Self::with_table_grid(coeffs, data, &CommitmentBuilder::default_grid())
    }

    pub fn with_table_grid(
        coeffs: ModelCoefficients,
        data: InitialData,
        table_grid: &MaturityGrid,
    ) -> Result<Self> {
        let validation = validate_coefficients(&coeffs, VALIDATION_RESOLUTION)?.into_result()?;
        let flow = CharacteristicFlow::new(coeffs.velocity.clone());
        let resting = SurvivalKernel::new(
            flow.clone(),
            coeffs.resting_loss.clone(),
            Mortality::Resting,
        );
        let proliferating = SurvivalKernel::new(
            flow.clone(),
            coeffs.apoptosis.clone(),
            Mortality::Proliferating,
        );
        let builder = CommitmentBuilder::with_flow(&coeffs, flow.clone());
        let maps = builder.build(table_grid)?;
        Ok(Self {
            coeffs,
            data,
            flow,
            resting,
            proliferating,
            builder,
            maps,
            validation,
        })
    }

    /// Same coefficients and tables, different initial data.
    pub fn with_data(&self, data: InitialData) -> Self {
        Self {
            data,
            ..self.clone()
        }
    }

    pub fn coefficients(&self) -> &ModelCoefficients {
        &self.coeffs
    }

    pub fn data(&self) -> &InitialData {
        &self.data
    }

    pub fn flow(&self) -> &CharacteristicFlow {
        &self.flow
    }

    /// K, attenuation by δ + V'.
    pub fn resting_kernel(&self) -> &SurvivalKernel {
        &self.resting
    }

    /// ξ, attenuation by γ + V'.
    pub fn proliferating_kernel(&self) -> &SurvivalKernel {
        &self.proliferating
    }

    pub fn builder(&self) -> &CommitmentBuilder {
        &self.builder
    }

    pub fn maps(&self) -> &CommitmentMaps {
        &self.maps
    }

    pub fn validation(&self) -> &ValidationReport {
        &self.validation
    }

    /// Γ̄(m) = ∫₀^{τ(Θ(m))} Γ(m, a) da.
    pub fn gamma_bar(&self, m: f64) -> f64 {
        self.data.gamma_bar(m, self.maps.tau_theta(m))
    }

    /// Source of newborn resting cells at maturity m and time t, fed by the
    /// initial proliferating surface while t ≤ τ(Δ(m)) and by the delayed
    /// resting density x = N(t − τ(Δ(m)), Δ(m)) afterwards.
    pub fn source_f(&self, t: f64, m: f64, x: f64) -> Result<f64> {
        let maps = &self.maps;
        let tau_d = maps.tau_delta(m);
        if t <= tau_d {
            let (ginv, dginv) = maps.g_inverse(m);
            if dginv == 0.0 {
                return Ok(0.0);
            }
            let xi = self.proliferating.eval(t, ginv)?;
            let origin = self.flow.chi(-t, ginv)?;
            Ok(2.0 * dginv * xi * self.data.gamma(origin, tau_d - t))
        } else {
            let d = maps.delta(m);
            Ok(maps.zeta(m) * self.coeffs.beta(d, x) * x)
        }
    }

    /// Rate at which proliferating cells of maturity m leave by division at
    /// time t; x = N(t − τ(Θ(m)), Θ(m)) past the initial surface.
    pub fn source_g(&self, t: f64, m: f64, x: f64) -> Result<f64> {
        let maps = &self.maps;
        let tau_t = maps.tau_theta(m);
        let pi = maps.pi(m);
        if t <= tau_t {
            let xi = self.proliferating.eval(t, m)?;
            let origin = self.flow.chi(-t, m)?;
            Ok(pi * xi * self.data.gamma(origin, tau_t - t))
        } else {
            let th = maps.theta(m);
            let xi = self.proliferating.eval(tau_t, m)?;
            Ok(pi * xi * self.coeffs.beta(th, x) * x)
        }
    }
}
