//! Coefficient sets `b`, `alpha`, `g`, `f` of the controlled jump SDE
//!
//! ```text
//! dX = b(t, X, a) dt + alpha(t, X, a) dW + ∫_{|z|<=1} g(X-, t, z, a) Ñ(dt, dz)
//!                                         + ∫_{|z|>1}  f(X-, t, z, a) N(dt, dz)
//! ```
//!
//! and a probe that estimates their Lipschitz and linear-growth constants.

mod catalog;
mod probe;

use serde::{Deserialize, Serialize};

pub use catalog::{CatalogModel, CatalogParams, ParamValue};
pub use probe::{probe_hypotheses, HypothesisProbeReport, ProbeDomain};

/// Dimensions of state `d`, Brownian motion `m`, marks and controls `l`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub state: usize,
    pub brownian: usize,
    pub mark: usize,
    pub control: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CatalogId {
    pub name: String,
    pub params: Vec<(String, Vec<f64>)>,
}

/// One value per coefficient map.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PerCoefficient<T> {
    pub drift: T,
    pub diffusion: T,
    pub small_jump: T,
    pub large_jump: T,
}

impl<T: Copy> PerCoefficient<T> {
    pub fn splat(v: T) -> Self {
        PerCoefficient { drift: v, diffusion: v, small_jump: v, large_jump: v }
    }

    pub fn as_array(&self) -> [T; 4] {
        [self.drift, self.diffusion, self.small_jump, self.large_jump]
    }

    pub fn from_array(a: [T; 4]) -> Self {
        PerCoefficient { drift: a[0], diffusion: a[1], small_jump: a[2], large_jump: a[3] }
    }
}

pub const COEFFICIENT_NAMES: [&str; 4] = ["drift", "diffusion", "small_jump", "large_jump"];

/// Analytically known Lipschitz constants, where the catalog knows them.
/// Jump constants are pointwise in the mark over its region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KnownConstants {
    pub lipschitz_x: PerCoefficient<Option<f64>>,
    pub lipschitz_a: PerCoefficient<Option<f64>>,
}

/// Evaluable coefficient set. Every method overwrites `out`:
/// `drift` writes `d` values, `diffusion` a row-major `d x m` matrix, the
/// jump maps `d` values.
pub trait Coefficients: Send + Sync {
    fn dims(&self) -> Dims;

    fn drift(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]);

    fn diffusion(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]);

    fn small_jump(&self, x: &[f64], t: f64, z: &[f64], a: &[f64], out: &mut [f64]);

    fn large_jump(&self, x: &[f64], t: f64, z: &[f64], a: &[f64], out: &mut [f64]);

    /// `false` only if `g` is identically zero.
    fn has_small_jumps(&self) -> bool {
        true
    }

    /// `false` only if `f` is identically zero; the integrator then never
    /// inserts large-jump nodes.
    fn has_large_jumps(&self) -> bool {
        true
    }

    fn known_constants(&self) -> KnownConstants {
        KnownConstants::default()
    }

    fn catalog_id(&self) -> CatalogId;

    /// Largest known x-Lipschitz constant of `b`, `alpha`, `g`.
    fn declared_lipschitz(&self) -> Option<f64> {
        let k = self.known_constants().lipschitz_x;
        Some(k.drift?.max(k.diffusion?).max(k.small_jump?))
    }
}

/// The same coefficients with `f` forced to zero.
pub struct WithoutLargeJumps<C>(pub C);

impl<C: Coefficients> Coefficients for WithoutLargeJumps<C> {
    fn dims(&self) -> Dims {
        self.0.dims()
    }
    fn drift(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        self.0.drift(t, x, a, out)
    }
    fn diffusion(&self, t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        self.0.diffusion(t, x, a, out)
    }
    fn small_jump(&self, x: &[f64], t: f64, z: &[f64], a: &[f64], out: &mut [f64]) {
        self.0.small_jump(x, t, z, a, out)
    }
    fn large_jump(&self, _x: &[f64], _t: f64, _z: &[f64], _a: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
    fn has_small_jumps(&self) -> bool {
        self.0.has_small_jumps()
    }
    fn has_large_jumps(&self) -> bool {
        false
    }
    fn known_constants(&self) -> KnownConstants {
        let mut k = self.0.known_constants();
        k.lipschitz_x.large_jump = Some(0.0);
        k.lipschitz_a.large_jump = Some(0.0);
        k
    }
    fn catalog_id(&self) -> CatalogId {
        let mut id = self.0.catalog_id();
        id.name.push_str("+no-large-jumps");
        id
    }
}

/// Axis-aligned box `[lower, upper]` in state or action space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl StateBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> crate::Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(crate::Error::argument("box bounds must be nonempty and of equal length"));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l.is_finite() && u.is_finite() && l <= u)) {
            return Err(crate::Error::argument("box bounds must be finite with lower <= upper"));
        }
        Ok(StateBox { lower, upper })
    }

    pub fn symmetric(dim: usize, radius: f64) -> Self {
        StateBox { lower: vec![-radius; dim], upper: vec![radius; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).any(|(l, u)| l >= u)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Clamps in place; returns whether anything moved.
    pub fn clamp(&self, x: &mut [f64]) -> bool {
        let mut moved = false;
        for (v, (l, u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            let c = v.clamp(*l, *u);
            if c != *v {
                *v = c;
                moved = true;
            }
        }
        moved
    }

    /// Tensor lattice with `points` nodes per axis (the centre if `points == 1`).
    pub fn lattice(&self, points: usize) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| {
                if points <= 1 {
                    vec![0.5 * (l + u)]
                } else {
                    (0..points).map(|i| l + (u - l) * i as f64 / (points - 1) as f64).collect()
                }
            })
            .collect();
        let mut out = vec![Vec::new()];
        for axis in &axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push(*v);
                        p
                    })
                })
                .collect();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lattice_enumerates_tensor_grid() {
        let b = StateBox::symmetric(2, 1.0);
        let pts = b.lattice(3);
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], vec![-1.0, -1.0]);
        assert_eq!(pts[4], vec![0.0, 0.0]);
        assert_eq!(pts[8], vec![1.0, 1.0]);
    }

    #[test]
    fn clamp_reports_movement() {
        let b = StateBox::symmetric(1, 2.0);
        let mut x = [3.0];
        assert!(b.clamp(&mut x));
        assert_eq!(x, [2.0]);
        assert!(!b.clamp(&mut x));
    }
}
