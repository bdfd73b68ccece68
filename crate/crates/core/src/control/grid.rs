use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular state grid with `counts[i] >= 2` nodes on axis `i`,
/// row-major with the last axis fastest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateGrid {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

impl StateGrid {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::config("state grid bounds and counts must have equal nonzero length"));
        }
        for i in 0..lower.len() {
            if !(lower[i].is_finite() && upper[i].is_finite() && lower[i] < upper[i]) {
                return Err(Error::config(format!("state grid axis {i}: need lower < upper")));
            }
            if counts[i] < 2 {
                return Err(Error::config(format!("state grid axis {i}: need at least 2 nodes")));
            }
        }
        Ok(StateGrid { lower, upper, counts })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        (self.upper[axis] - self.lower[axis]) / (self.counts[axis] - 1) as f64
    }

    fn axis_value(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.upper[axis]
        } else {
            self.lower[axis] + self.spacing(axis) * i as f64
        }
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (i, n)| acc * n + i)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).iter().enumerate().map(|(axis, &i)| self.axis_value(axis, i)).collect()
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }

    /// Fractional coordinate along `axis`, clamped into the grid.
    fn coordinate(&self, axis: usize, x: f64) -> (f64, bool) {
        let n = self.counts[axis];
        let p = (x - self.lower[axis]) / (self.upper[axis] - self.lower[axis]) * (n - 1) as f64;
        let clamped = !(0.0..=(n - 1) as f64).contains(&p);
        let mut p = p.clamp(0.0, (n - 1) as f64);
        if (p - p.round()).abs() < 1e-9 {
            p = p.round();
        }
        (p, clamped)
    }

    /// Nearest node; ties go to the lower node.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let idx: Vec<usize> = (0..self.dim())
            .map(|axis| {
                let (p, _) = self.coordinate(axis, x[axis]);
                let lo = p.floor();
                if p - lo > 0.5 {
                    lo as usize + 1
                } else {
                    lo as usize
                }
            })
            .collect();
        self.flat_index(&idx)
    }

    /// Multilinear interpolation of nodal `values`; queries outside the grid
    /// are clamped to the nearest face and flagged.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> (f64, bool) {
        let d = self.dim();
        let mut base = vec![0usize; d];
        let mut weight = vec![0.0f64; d];
        let mut clamped = false;
        for axis in 0..d {
            let (p, c) = self.coordinate(axis, x[axis]);
            clamped |= c;
            let i0 = (p.floor() as usize).min(self.counts[axis] - 2);
            base[axis] = i0;
            weight[axis] = p - i0 as f64;
        }
        // corner values, then linear blends axis by axis (exact on constants)
        let mut corners: Vec<f64> = (0..(1usize << d))
            .map(|corner| {
                let idx: Vec<usize> = (0..d).map(|axis| base[axis] + ((corner >> axis) & 1)).collect();
                values[self.flat_index(&idx)]
            })
            .collect();
        for axis in 0..d {
            let w = weight[axis];
            corners = corners
                .chunks(2)
                .map(|pair| if w == 0.0 { pair[0] } else { pair[0] + w * (pair[1] - pair[0]) })
                .collect();
        }
        let total = corners[0];
        (total, clamped)
    }

    /// Flat indices of the grid neighbours of node `flat` (one step along each axis).
    pub fn neighbours(&self, flat: usize) -> Vec<usize> {
        let idx = self.multi_index(flat);
        let mut out = Vec::new();
        for axis in 0..self.dim() {
            for delta in [-1i64, 1] {
                let j = idx[axis] as i64 + delta;
                if j >= 0 && (j as usize) < self.counts[axis] {
                    let mut n = idx.clone();
                    n[axis] = j as usize;
                    out.push(self.flat_index(&n));
                }
            }
        }
        out
    }
}
