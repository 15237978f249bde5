//! Maturity grids: geometric grading near the degenerate point m = 0,
//! uniform spacing beyond.

use serde::Serialize;

use crate::error::{Error, Result};

pub const DEFAULT_GRADING: f64 = 1.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaturityGrid {
    nodes: Vec<f64>,
}

impl MaturityGrid {
    /// `count` nodes on [0, 1]: cells grow geometrically from `smallest`
    /// until they reach the width of the uniform remainder.
    pub fn graded(count: usize, smallest: f64) -> Result<Self> {
        Self::graded_with_ratio(count, smallest, DEFAULT_GRADING)
    }

    /// As [`MaturityGrid::graded`] with neighbouring cells growing by `ratio`.
    pub fn graded_with_ratio(count: usize, smallest: f64, ratio: f64) -> Result<Self> {
        if !(ratio > 1.0 && ratio <= 2.0) {
            return Err(Error::param(
                "grid.grading",
                format!("must lie in (1, 2], got {ratio}"),
            ));
        }
        if count < 3 {
            return Err(Error::param("grid.maturity_nodes", "need at least 3 nodes"));
        }
        let cells = (count - 1) as f64;
        if !(smallest > 0.0 && smallest < 1.0 / cells) {
            return Err(Error::param(
                "grid.smallest_cell",
                format!("must lie in (0, 1/(nodes-1)) = (0, {})", 1.0 / cells),
            ));
        }
        // Geometric cells below width w: their count and total length.
        let geometric = |w: f64| {
            let (mut n, mut len, mut h) = (0usize, 0.0, smallest);
            while h < w && len + h < 1.0 {
                len += h;
                h *= ratio;
                n += 1;
            }
            (n, len)
        };
        let total = |w: f64| {
            let (n, len) = geometric(w);
            n as f64 + (1.0 - len) / w
        };
        // total(w) decreases in w; find w with total(w) = cells.
        let (mut lo, mut hi) = (smallest, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if total(mid) > cells {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (ng, len) = geometric(hi);
        let nu = (count - 1).saturating_sub(ng).max(1);
        let mut nodes = Vec::with_capacity(ng + nu + 1);
        nodes.push(0.0);
        let mut h = smallest;
        let mut x = 0.0;
        for _ in 0..ng {
            x += h;
            h *= ratio;
            nodes.push(x);
        }
        let w = (1.0 - len) / nu as f64;
        for k in 1..=nu {
            nodes.push(if k == nu { 1.0 } else { len + w * k as f64 });
        }
        Ok(Self { nodes })
    }

    pub fn uniform(count: usize) -> Result<Self> {
        if count < 2 {
            return Err(Error::param("grid.maturity_nodes", "need at least 2 nodes"));
        }
        let n = (count - 1) as f64;
        Ok(Self {
            nodes: (0..count).map(|k| k as f64 / n).collect(),
        })
    }

    pub fn from_nodes(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 || *nodes.last().unwrap() != 1.0 {
            return Err(Error::param("grid.nodes", "must start at 0 and end at 1"));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("grid.nodes", "must be strictly increasing"));
        }
        Ok(Self { nodes })
    }

    /// Insert the midpoint of every cell.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(0.5 * (w[0] + w[1]));
        }
        nodes.push(1.0);
        Self { nodes }
    }

    /// The grid with `extra` points merged in (duplicates dropped).
    pub fn with_points(&self, extra: &[f64]) -> Self {
        let mut nodes = self.nodes.clone();
        nodes.extend(extra.iter().copied().filter(|x| (0.0..=1.0).contains(x)));
        nodes.sort_by(f64::total_cmp);
        nodes.dedup();
        Self { nodes }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn smallest_cell(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn largest_cell(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }
}
