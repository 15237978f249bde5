//! Gridded densities on a uniform time grid × maturity grid.

use std::fmt;

use crate::error::{Error, Result};
use crate::interp::locate;
use crate::model::ScalarFn;

/// Values on t_r = t0 + r·dt (r = 0..rows) × maturity nodes, row-major.
/// When a history function is attached, lookups at t ≤ 0 return it exactly.
#[derive(Clone)]
pub struct SolutionField {
    t0: f64,
    dt: f64,
    rows: usize,
    maturities: Vec<f64>,
    values: Vec<f64>,
    history: Option<ScalarFn>,
}

impl fmt::Debug for SolutionField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SolutionField")
            .field("t0", &self.t0)
            .field("dt", &self.dt)
            .field("rows", &self.rows)
            .field("nodes", &self.maturities.len())
            .field("history", &self.history.is_some())
            .finish()
    }
}

impl SolutionField {
    pub fn new(
        t0: f64,
        dt: f64,
        rows: usize,
        maturities: Vec<f64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(dt > 0.0) || rows == 0 || maturities.len() < 2 {
            return Err(Error::param("field", "need dt > 0, one row and two nodes"));
        }
        if values.len() != rows * maturities.len() {
            return Err(Error::param(
                "field.values",
                format!(
                    "expected {} values, got {}",
                    rows * maturities.len(),
                    values.len()
                ),
            ));
        }
        Ok(Self {
            t0,
            dt,
            rows,
            maturities,
            values,
            history: None,
        })
    }

    pub fn zeros(t0: f64, dt: f64, rows: usize, maturities: Vec<f64>) -> Result<Self> {
        let n = rows * maturities.len();
        Self::new(t0, dt, rows, maturities, vec![0.0; n])
    }

    pub fn with_history(mut self, history: ScalarFn) -> Self {
        self.history = Some(history);
        self
    }

    pub fn history(&self) -> Option<&ScalarFn> {
        self.history.as_ref()
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.rows - 1)
    }

    #[inline]
    pub fn time(&self, row: usize) -> f64 {
        self.t0 + self.dt * row as f64
    }

    pub fn maturities(&self) -> &[f64] {
        &self.maturities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        let j = self.maturities.len();
        &self.values[r * j..(r + 1) * j]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let j = self.maturities.len();
        &mut self.values[r * j..(r + 1) * j]
    }

    #[inline]
    pub fn value(&self, r: usize, j: usize) -> f64 {
        self.values[r * self.maturities.len() + j]
    }

    /// Row index of time t if it is a grid time.
    pub fn row_of(&self, t: f64) -> Option<usize> {
        let f = (t - self.t0) / self.dt;
        let r = f.round();
        ((f - r).abs() < 1e-9 && r >= 0.0 && (r as usize) < self.rows).then_some(r as usize)
    }

    /// Bilinear interpolation; exact at nodes.
    pub fn eval(&self, t: f64, m: f64) -> Result<f64> {
        let tol = 1e-9 * self.dt;
        if !(t >= self.t0 - tol && t <= self.t_end() + tol && (-1e-12..=1.0 + 1e-12).contains(&m)) {
            return Err(Error::OutOfRange { t, m });
        }
        if let Some(h) = &self.history {
            if t <= 0.0 {
                return Ok(h(m));
            }
        }
        let f = (t - self.t0) / self.dt;
        let r = f.round();
        let (r0, w) = if (f - r).abs() < 1e-9 {
            (r as usize, 0.0)
        } else {
            (f.floor() as usize, f - f.floor())
        };
        let (r0, w) = if r0 >= self.rows - 1 {
            (self.rows - 1, 0.0)
        } else {
            (r0, w)
        };
        let lower = self.eval_row(r0, m);
        if w == 0.0 {
            return Ok(lower);
        }
        Ok((1.0 - w) * lower + w * self.eval_row(r0 + 1, m))
    }

    /// Linear interpolation in m on one stored row.
    #[inline]
    pub fn eval_row(&self, r: usize, m: f64) -> f64 {
        let (c, w) = locate(&self.maturities, m);
        self.interp_cell(r, c, w)
    }

    #[inline]
    pub fn interp_cell(&self, r: usize, cell: usize, w: f64) -> f64 {
        let row = self.row(r);
        if w == 0.0 {
            row[cell]
        } else {
            (1.0 - w) * row[cell] + w * row[cell + 1]
        }
    }

    /// sup over maturity nodes of |value| on row r.
    pub fn row_sup(&self, r: usize) -> f64 {
        self.row(r).iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn sup(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// sup over all nodes of |self − other| on matching grids.
    pub fn distance(&self, other: &SolutionField) -> Result<f64> {
        if self.values.len() != other.values.len() || self.maturities != other.maturities {
            return Err(Error::param("field", "grids differ"));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |a, (x, y)| a.max((x - y).abs())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn sample() -> SolutionField {
        // rows t = -1, 0, 1; nodes 0, 0.5, 1
        let v = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 4.0];
        SolutionField::new(-1.0, 1.0, 3, vec![0.0, 0.5, 1.0], v).unwrap()
    }

    #[test]
    fn nodes_are_reproduced() {
        let f = sample();
        for r in 0..3 {
            for (j, &m) in f.maturities().to_vec().iter().enumerate() {
                assert_eq!(f.eval(f.time(r), m).unwrap(), f.value(r, j));
            }
        }
    }

    #[test]
    fn bilinear_midpoint() {
        // corners {0, 0, 1, 1} varying in m
        let f = SolutionField::new(0.0, 1.0, 2, vec![0.0, 1.0], vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(f.eval(0.5, 0.5).unwrap(), 0.5);
    }

    #[test]
    fn history_lookup_is_exact() {
        let f = sample().with_history(Arc::new(|m: f64| 1.0 - m * m));
        for &t in &[-1.0, -0.37, 0.0] {
            assert_eq!(f.eval(t, 0.3).unwrap(), 1.0 - 0.09);
        }
        assert_eq!(f.eval(1.0, 0.5).unwrap(), 3.0);
    }

    #[test]
    fn out_of_range_is_reported() {
        let f = sample();
        assert!(matches!(f.eval(1.5, 0.2), Err(Error::OutOfRange { .. })));
        assert!(matches!(f.eval(-2.0, 0.2), Err(Error::OutOfRange { .. })));
        assert!(matches!(f.eval(0.0, 1.2), Err(Error::OutOfRange { .. })));
    }
}
