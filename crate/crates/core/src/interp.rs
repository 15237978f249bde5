//! One-dimensional interpolation on sorted, non-uniform nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index `i` and weight `w` such that `x = (1-w) * nodes[i] + w * nodes[i+1]`.
/// Values outside the node range are clamped to the end cells.
#[inline]
pub fn locate(nodes: &[f64], x: f64) -> (usize, f64) {
    let n = nodes.len();
    debug_assert!(n >= 2);
    let i = match nodes.binary_search_by(|v| v.total_cmp(&x)) {
        Ok(i) => i.min(n - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(n - 2),
    };
    let h = nodes[i + 1] - nodes[i];
    let w = if h > 0.0 { (x - nodes[i]) / h } else { 0.0 };
    (i, w.clamp(0.0, 1.0))
}

fn check_nodes(xs: &[f64], ys: &[f64]) -> Result<()> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return Err(Error::param(
            "table",
            format!(
                "need at least two nodes with matching values ({} vs {})",
                xs.len(),
                ys.len()
            ),
        ));
    }
    if xs.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::param("table", "nodes must be strictly increasing"));
    }
    if ys.iter().chain(xs).any(|v| !v.is_finite()) {
        return Err(Error::param("table", "non-finite entry"));
    }
    Ok(())
}

/// Piecewise-linear table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearTable {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl LinearTable {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_nodes(&xs, &ys)?;
        Ok(Self { xs, ys })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, w) = locate(&self.xs, x);
        (1.0 - w) * self.ys[i] + w * self.ys[i + 1]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }
}

/// Monotone piecewise-cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pchip {
    xs: Vec<f64>,
    ys: Vec<f64>,
    ds: Vec<f64>,
}

impl Pchip {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self> {
        check_nodes(&xs, &ys)?;
        let n = xs.len();
        let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (ys[k + 1] - ys[k]) / h[k]).collect();
        let mut ds = vec![0.0; n];
        if n == 2 {
            ds[0] = delta[0];
            ds[1] = delta[0];
        } else {
            for k in 1..n - 1 {
                if delta[k - 1] * delta[k] > 0.0 {
                    let w1 = 2.0 * h[k] + h[k - 1];
                    let w2 = h[k] + 2.0 * h[k - 1];
                    ds[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
                }
            }
            ds[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            ds[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Ok(Self { xs, ys, ds })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = locate(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.ds[i] + h01 * self.ys[i + 1] + h11 * h * self.ds[i + 1]
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (i, t) = locate(&self.xs, x);
        let h = self.xs[i + 1] - self.xs[i];
        let t2 = t * t;
        let d00 = (6.0 * t2 - 6.0 * t) / h;
        let d10 = 3.0 * t2 - 4.0 * t + 1.0;
        let d01 = (-6.0 * t2 + 6.0 * t) / h;
        let d11 = 3.0 * t2 - 2.0 * t;
        d00 * self.ys[i] + d10 * self.ds[i] + d01 * self.ys[i + 1] + d11 * self.ds[i + 1]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.ys
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d.signum() != d0.signum() {
        0.0
    } else if d0.signum() != d1.signum() && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

/// Monotone cubic interpolant split at a breakpoint; left-continuous there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPchip {
    left: Pchip,
    right: Option<Pchip>,
    breakpoint: f64,
}

impl SplitPchip {
    /// `xs` must contain `breakpoint` when it lies inside the range; `ys`
    /// holds the left-continuous values and `right_limit` the value just
    /// to the right of the breakpoint.
    pub fn new(xs: &[f64], ys: &[f64], breakpoint: f64, right_limit: f64) -> Result<Self> {
        let Some(k) = xs.iter().position(|&x| x == breakpoint) else {
            return Ok(Self {
                left: Pchip::new(xs.to_vec(), ys.to_vec())?,
                right: None,
                breakpoint: f64::INFINITY,
            });
        };
        let left = Pchip::new(xs[..=k].to_vec(), ys[..=k].to_vec())?;
        let right = if k + 1 < xs.len() {
            let mut rx = vec![breakpoint];
            rx.extend_from_slice(&xs[k + 1..]);
            let mut ry = vec![right_limit];
            ry.extend_from_slice(&ys[k + 1..]);
            Some(Pchip::new(rx, ry)?)
        } else {
            None
        };
        Ok(Self {
            left,
            right,
            breakpoint,
        })
    }

    /// Build from separate left and right tables meeting at `breakpoint`.
    pub fn from_pieces(left: Pchip, right: Option<Pchip>, breakpoint: f64) -> Self {
        Self {
            left,
            right,
            breakpoint,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.right {
            Some(r) if x > self.breakpoint => r.eval(x),
            _ => self.left.eval(x),
        }
    }

    pub fn breakpoint(&self) -> f64 {
        self.breakpoint
    }
}
