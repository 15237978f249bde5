//! Gauss–Legendre rules: fixed composite integration along a trajectory
//! and a simple adaptive variant for integrands with a singular endpoint.

use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// A Gauss–Legendre rule mapped to the unit interval.
#[derive(Debug, Clone)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussRule {
    pub fn new(points: usize) -> Self {
        let degree = NonZeroUsize::new(points.max(1)).expect("nonzero");
        let rule = GaussLegendre::new(degree);
        let (nodes, weights) = rule
            .as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .unzip();
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Nodes and weights on [0, 1].
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let h = b - a;
        self.pairs().map(|(x, w)| w * f(a + h * x)).sum::<f64>() * h
    }

    pub fn try_integrate<F>(&self, a: f64, b: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        let h = b - a;
        let mut acc = 0.0;
        for (x, w) in self.pairs() {
            acc += w * f(a + h * x)?;
        }
        Ok(acc * h)
    }
}

/// Composite Gauss–Legendre with a fixed number of panels per unit length.
#[derive(Debug, Clone)]
pub struct CompositeGauss {
    rule: GaussRule,
    panels_per_unit: f64,
}

impl Default for CompositeGauss {
    /// 16 nodes per unit length.
    fn default() -> Self {
        Self::new(16, 1.0)
    }
}

impl CompositeGauss {
    pub fn new(points: usize, panels_per_unit: f64) -> Self {
        Self {
            rule: GaussRule::new(points),
            panels_per_unit: panels_per_unit.max(f64::MIN_POSITIVE),
        }
    }

    pub fn panels_for(&self, length: f64) -> usize {
        ((length.abs() * self.panels_per_unit).ceil() as usize).max(1)
    }

    pub fn try_integrate<F>(&self, a: f64, b: f64, mut f: F) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if a == b {
            return Ok(0.0);
        }
        let panels = self.panels_for(b - a);
        let h = (b - a) / panels as f64;
        let mut acc = 0.0;
        for p in 0..panels {
            let lo = a + h * p as f64;
            acc += self.rule.try_integrate(lo, lo + h, &mut f)?;
        }
        Ok(acc)
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        self.try_integrate(a, b, |x| Ok(f(x))).expect("infallible")
    }
}

/// Adaptive bisection on a 15-point Gauss–Legendre rule: a panel is
/// accepted when it agrees with the sum over its two halves.
pub fn adaptive<F: FnMut(f64) -> f64>(a: f64, b: f64, tol: f64, mut f: F) -> Result<f64> {
    let rule = GaussRule::new(15);
    let whole = rule.integrate(a, b, &mut f);
    let mut stack = vec![(a, b, whole, 0u32)];
    let mut total = 0.0;
    let mut budget = 20_000usize;
    while let Some((lo, hi, estimate, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(lo, mid, &mut f);
        let right = rule.integrate(mid, hi, &mut f);
        let refined = left + right;
        let scale = tol * (hi - lo).abs() / (b - a).abs().max(f64::MIN_POSITIVE);
        if (refined - estimate).abs() <= scale.max(1e-15 * refined.abs()) || depth >= 48 {
            if !refined.is_finite() {
                return Err(Error::Quadrature {
                    a: lo,
                    b: hi,
                    estimate: refined,
                });
            }
            total += refined;
            continue;
        }
        budget = budget.checked_sub(1).ok_or(Error::Quadrature {
            a: lo,
            b: hi,
            estimate: refined,
        })?;
        stack.push((lo, mid, left, depth + 1));
        stack.push((mid, hi, right, depth + 1));
    }
    Ok(total)
}
