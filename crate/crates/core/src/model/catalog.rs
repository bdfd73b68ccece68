use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CatalogId, Coefficients, Dims, KnownConstants, PerCoefficient};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ParamValue {
    fn as_vec(&self) -> Vec<f64> {
        match self {
            ParamValue::Scalar(v) => vec![*v],
            ParamValue::Vector(v) => v.clone(),
        }
    }
}

/// Flat parameter table of a catalog entry.
pub type CatalogParams = BTreeMap<String, ParamValue>;

/// Built-in coefficient sets.
#[derive(Clone, Debug, PartialEq)]
pub enum CatalogModel {
    /// `b = A x + B a + c`, `alpha` constant, no jumps.
    Affine {
        dim: usize,
        brownian_dim: usize,
        control_dim: usize,
        mark_dim: usize,
        a: Vec<f64>,
        b: Vec<f64>,
        c: Vec<f64>,
        sigma: Vec<f64>,
    },
    /// `b = theta (mu - x)`, `alpha = sigma`, scalar.
    OrnsteinUhlenbeck { theta: f64, mu: f64, sigma: f64, mark_dim: usize },
    /// `b = a`, `alpha = sigma I`.
    ControlledDrift { dim: usize, sigma: f64, mark_dim: usize },
    /// `b = a x`, `alpha = sigma`, scalar.
    ControlledLinear { sigma: f64, mark_dim: usize },
    /// `b = mu c(x)`, `alpha = sigma c(x)` with `c` the clamp to `[-radius, radius]`.
    GeometricLike { mu: f64, sigma: f64, radius: f64, mark_dim: usize },
    /// `b = theta (mu - x) + control_gain a`, `alpha = sigma I`,
    /// `g = gamma x mean(z) + eta z`, `f = kappa z`; marks live in the state space.
    JumpLinear {
        dim: usize,
        theta: f64,
        mu: f64,
        sigma: f64,
        gamma: f64,
        eta: f64,
        kappa: f64,
        control_gain: Option<f64>,
    },
}

pub const CATALOG_NAMES: [&str; 6] =
    ["affine", "ornstein-uhlenbeck", "controlled-drift", "controlled-linear", "geometric-like", "jump-linear"];

struct Params<'a> {
    name: &'a str,
    table: &'a CatalogParams,
}

impl Params<'_> {
    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.table.keys().find(|k| !allowed.contains(&k.as_str())) {
            Some(k) => Err(Error::config(format!(
                "unknown parameter `{k}` for catalog entry `{}` (allowed: {})",
                self.name,
                allowed.join(", ")
            ))),
            None => Ok(()),
        }
    }

    fn vector(&self, key: &str, len: usize, default: f64) -> Result<Vec<f64>> {
        let v = match self.table.get(key) {
            None => return Ok(vec![default; len]),
            Some(p) => p.as_vec(),
        };
        if v.len() != len {
            return Err(Error::config(format!(
                "`{}`: parameter `{key}` has {} entries, expected {len}",
                self.name,
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::config(format!("`{}`: parameter `{key}` is not finite", self.name)));
        }
        Ok(v)
    }

    fn scalar(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.vector(key, 1, default)?[0])
    }

    fn optional(&self, key: &str) -> Result<Option<f64>> {
        if self.table.contains_key(key) {
            Ok(Some(self.scalar(key, 0.0)?))
        } else {
            Ok(None)
        }
    }

    fn count(&self, key: &str, default: usize) -> Result<usize> {
        let v = self.scalar(key, default as f64)?;
        if v < 1.0 || v.fract() != 0.0 || v > 64.0 {
            return Err(Error::config(format!("`{}`: `{key}` must be a positive integer", self.name)));
        }
        Ok(v as usize)
    }
}

fn spectral_norm(m: &[f64], rows: usize, cols: usize) -> f64 {
    if rows == 0 || cols == 0 || m.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    // power iteration on M^T M
    let mut v: Vec<f64> = (0..cols).map(|i| 1.0 / (1.0 + i as f64)).collect();
    let mut sigma = 0.0;
    for _ in 0..500 {
        let mv: Vec<f64> = (0..rows).map(|r| (0..cols).map(|c| m[r * cols + c] * v[c]).sum()).collect();
        let mtmv: Vec<f64> = (0..cols).map(|c| (0..rows).map(|r| m[r * cols + c] * mv[r]).sum()).collect();
        let n = mtmv.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n == 0.0 {
            break;
        }
        sigma = n.sqrt();
        v = mtmv.iter().map(|x| x / n).collect();
    }
    sigma
}

impl CatalogModel {
    pub fn from_catalog(name: &str, table: &CatalogParams) -> Result<Self> {
        let p = Params { name, table };
        let model = match name {
            "affine" => {
                p.check_keys(&["dim", "brownian_dim", "control_dim", "mark_dim", "a", "b", "c", "sigma"])?;
                let dim = p.count("dim", 1)?;
                let brownian_dim = p.count("brownian_dim", dim)?;
                let control_dim = match table.get("control_dim") {
                    Some(_) if p.scalar("control_dim", 0.0)? == 0.0 => 0,
                    Some(_) => p.count("control_dim", 1)?,
                    None => 0,
                };
                CatalogModel::Affine {
                    dim,
                    brownian_dim,
                    control_dim,
                    mark_dim: p.count("mark_dim", 1)?,
                    a: p.vector("a", dim * dim, 0.0)?,
                    b: p.vector("b", dim * control_dim, 0.0)?,
                    c: p.vector("c", dim, 0.0)?,
                    sigma: p.vector("sigma", dim * brownian_dim, 0.0)?,
                }
            }
            "ornstein-uhlenbeck" => {
                p.check_keys(&["theta", "mu", "sigma", "mark_dim"])?;
                CatalogModel::OrnsteinUhlenbeck {
                    theta: p.scalar("theta", 1.0)?,
                    mu: p.scalar("mu", 0.0)?,
                    sigma: p.scalar("sigma", 1.0)?,
                    mark_dim: p.count("mark_dim", 1)?,
                }
            }
            "controlled-drift" => {
                p.check_keys(&["dim", "sigma", "mark_dim"])?;
                CatalogModel::ControlledDrift {
                    dim: p.count("dim", 1)?,
                    sigma: p.scalar("sigma", 0.0)?,
                    mark_dim: p.count("mark_dim", 1)?,
                }
            }
            "controlled-linear" => {
                p.check_keys(&["sigma", "mark_dim"])?;
                CatalogModel::ControlledLinear { sigma: p.scalar("sigma", 0.0)?, mark_dim: p.count("mark_dim", 1)? }
            }
            "geometric-like" => {
                p.check_keys(&["mu", "sigma", "radius", "mark_dim"])?;
                let radius = p.scalar("radius", 10.0)?;
                if radius <= 0.0 {
                    return Err(Error::config("`geometric-like`: radius must be positive"));
                }
                CatalogModel::GeometricLike {
                    mu: p.scalar("mu", 0.0)?,
                    sigma: p.scalar("sigma", 0.0)?,
                    radius,
                    mark_dim: p.count("mark_dim", 1)?,
                }
            }
            "jump-linear" => {
                p.check_keys(&["dim", "theta", "mu", "sigma", "gamma", "eta", "kappa", "control_gain"])?;
                CatalogModel::JumpLinear {
                    dim: p.count("dim", 1)?,
                    theta: p.scalar("theta", 0.0)?,
                    mu: p.scalar("mu", 0.0)?,
                    sigma: p.scalar("sigma", 0.0)?,
                    gamma: p.scalar("gamma", 0.0)?,
                    eta: p.scalar("eta", 0.0)?,
                    kappa: p.scalar("kappa", 1.0)?,
                    control_gain: p.optional("control_gain")?,
                }
            }
            other => {
                return Err(Error::config(format!(
                    "unknown catalog entry `{other}` (known: {})",
                    CATALOG_NAMES.join(", ")
                )))
            }
        };
        Ok(model)
    }

    /// All coefficients zero in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        Self::constant_drift(vec![0.0; dim])
    }

    /// `b = c`, everything else zero.
    pub fn constant_drift(c: Vec<f64>) -> Self {
        let dim = c.len();
        CatalogModel::Affine {
            dim,
            brownian_dim: dim,
            control_dim: 0,
            mark_dim: 1,
            a: vec![0.0; dim * dim],
            b: Vec::new(),
            c,
            sigma: vec![0.0; dim * dim],
        }
    }

    pub fn ornstein_uhlenbeck(theta: f64, mu: f64, sigma: f64) -> Self {
        CatalogModel::OrnsteinUhlenbeck { theta, mu, sigma, mark_dim: 1 }
    }

    pub fn controlled_drift(sigma: f64) -> Self {
        CatalogModel::ControlledDrift { dim: 1, sigma, mark_dim: 1 }
    }

    pub fn controlled_linear(sigma: f64) -> Self {
        CatalogModel::ControlledLinear { sigma, mark_dim: 1 }
    }

    /// Scalar jump-linear entry without control.
    pub fn jump_linear(theta: f64, mu: f64, sigma: f64, gamma: f64, eta: f64, kappa: f64) -> Self {
        CatalogModel::JumpLinear { dim: 1, theta, mu, sigma, gamma, eta, kappa, control_gain: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CatalogModel::Affine { .. } => "affine",
            CatalogModel::OrnsteinUhlenbeck { .. } => "ornstein-uhlenbeck",
            CatalogModel::ControlledDrift { .. } => "controlled-drift",
            CatalogModel::ControlledLinear { .. } => "controlled-linear",
            CatalogModel::GeometricLike { .. } => "geometric-like",
            CatalogModel::JumpLinear { .. } => "jump-linear",
        }
    }
}

fn fill(out: &mut [f64], v: f64) {
    out.iter_mut().for_each(|o| *o = v);
}

fn scaled_identity(out: &mut [f64], dim: usize, s: f64) {
    fill(out, 0.0);
    for i in 0..dim {
        out[i * dim + i] = s;
    }
}

impl Coefficients for CatalogModel {
    fn dims(&self) -> Dims {
        match self {
            CatalogModel::Affine { dim, brownian_dim, control_dim, mark_dim, .. } => {
                Dims { state: *dim, brownian: *brownian_dim, mark: *mark_dim, control: *control_dim }
            }
            CatalogModel::OrnsteinUhlenbeck { mark_dim, .. } | CatalogModel::GeometricLike { mark_dim, .. } => {
                Dims { state: 1, brownian: 1, mark: *mark_dim, control: 0 }
            }
            CatalogModel::ControlledDrift { dim, mark_dim, .. } => {
                Dims { state: *dim, brownian: *dim, mark: *mark_dim, control: *dim }
            }
            CatalogModel::ControlledLinear { mark_dim, .. } => {
                Dims { state: 1, brownian: 1, mark: *mark_dim, control: 1 }
            }
            CatalogModel::JumpLinear { dim, control_gain, .. } => {
                Dims { state: *dim, brownian: *dim, mark: *dim, control: usize::from(control_gain.is_some()) }
            }
        }
    }

    fn drift(&self, _t: f64, x: &[f64], a: &[f64], out: &mut [f64]) {
        match self {
            CatalogModel::Affine { dim, control_dim, a: am, b: bm, c, .. } => {
                for i in 0..*dim {
                    let mut v = c[i];
                    for j in 0..*dim {
                        v += am[i * dim + j] * x[j];
                    }
                    for j in 0..*control_dim {
                        v += bm[i * control_dim + j] * a[j];
                    }
                    out[i] = v;
                }
            }
            CatalogModel::OrnsteinUhlenbeck { theta, mu, .. } => out[0] = theta * (mu - x[0]),
            CatalogModel::ControlledDrift { .. } => out.copy_from_slice(a),
            CatalogModel::ControlledLinear { .. } => out[0] = a[0] * x[0],
            CatalogModel::GeometricLike { mu, radius, .. } => out[0] = mu * x[0].clamp(-radius, *radius),
            CatalogModel::JumpLinear { theta, mu, control_gain, .. } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = theta * (mu - xi);
                    if let Some(k) = control_gain {
                        *o += k * a[0];
                    }
                }
            }
        }
    }

    fn diffusion(&self, _t: f64, x: &[f64], _a: &[f64], out: &mut [f64]) {
        match self {
            CatalogModel::Affine { sigma, .. } => out.copy_from_slice(sigma),
            CatalogModel::OrnsteinUhlenbeck { sigma, .. } | CatalogModel::ControlledLinear { sigma, .. } => {
                out[0] = *sigma
            }
            CatalogModel::ControlledDrift { dim, sigma, .. } | CatalogModel::JumpLinear { dim, sigma, .. } => {
                scaled_identity(out, *dim, *sigma)
            }
            CatalogModel::GeometricLike { sigma, radius, .. } => out[0] = sigma * x[0].clamp(-radius, *radius),
        }
    }

    fn small_jump(&self, x: &[f64], _t: f64, z: &[f64], _a: &[f64], out: &mut [f64]) {
        match self {
            CatalogModel::JumpLinear { gamma, eta, .. } => {
                let zbar = z.iter().sum::<f64>() / z.len() as f64;
                for ((o, xi), zi) in out.iter_mut().zip(x).zip(z) {
                    *o = gamma * xi * zbar + eta * zi;
                }
            }
            _ => fill(out, 0.0),
        }
    }

    fn large_jump(&self, _x: &[f64], _t: f64, z: &[f64], _a: &[f64], out: &mut [f64]) {
        match self {
            CatalogModel::JumpLinear { kappa, .. } => {
                for (o, zi) in out.iter_mut().zip(z) {
                    *o = kappa * zi;
                }
            }
            _ => fill(out, 0.0),
        }
    }

    fn has_small_jumps(&self) -> bool {
        matches!(self, CatalogModel::JumpLinear { gamma, eta, .. } if *gamma != 0.0 || *eta != 0.0)
    }

    fn has_large_jumps(&self) -> bool {
        matches!(self, CatalogModel::JumpLinear { kappa, .. } if *kappa != 0.0)
    }

    fn known_constants(&self) -> KnownConstants {
        let zero = Some(0.0);
        let (lx, la) = match self {
            CatalogModel::Affine { dim, control_dim, a, b, .. } => (
                [Some(spectral_norm(a, *dim, *dim)), zero, zero, zero],
                [Some(spectral_norm(b, *dim, *control_dim)), zero, zero, zero],
            ),
            CatalogModel::OrnsteinUhlenbeck { theta, .. } => ([Some(theta.abs()), zero, zero, zero], [zero; 4]),
            CatalogModel::ControlledDrift { .. } => ([zero; 4], [Some(1.0), zero, zero, zero]),
            // depends on the action box
            CatalogModel::ControlledLinear { .. } => ([None, zero, zero, zero], [None, zero, zero, zero]),
            CatalogModel::GeometricLike { mu, sigma, .. } => {
                ([Some(mu.abs()), Some(sigma.abs()), zero, zero], [zero; 4])
            }
            CatalogModel::JumpLinear { dim, theta, gamma, control_gain, .. } => (
                // |mean(z)| <= |z| / sqrt(d) <= 1 / sqrt(d) on the small region
                [Some(theta.abs()), zero, Some(gamma.abs() / (*dim as f64).sqrt()), zero],
                [Some(control_gain.map_or(0.0, f64::abs)), zero, zero, zero],
            ),
        };
        KnownConstants { lipschitz_x: PerCoefficient::from_array(lx), lipschitz_a: PerCoefficient::from_array(la) }
    }

    fn catalog_id(&self) -> CatalogId {
        let s = |k: &str, v: f64| (k.to_string(), vec![v]);
        let params = match self {
            CatalogModel::Affine { dim, brownian_dim, control_dim, mark_dim, a, b, c, sigma } => vec![
                ("a".to_string(), a.clone()),
                ("b".to_string(), b.clone()),
                s("brownian_dim", *brownian_dim as f64),
                ("c".to_string(), c.clone()),
                s("control_dim", *control_dim as f64),
                s("dim", *dim as f64),
                s("mark_dim", *mark_dim as f64),
                ("sigma".to_string(), sigma.clone()),
            ],
            CatalogModel::OrnsteinUhlenbeck { theta, mu, sigma, mark_dim } => {
                vec![s("mark_dim", *mark_dim as f64), s("mu", *mu), s("sigma", *sigma), s("theta", *theta)]
            }
            CatalogModel::ControlledDrift { dim, sigma, mark_dim } => {
                vec![s("dim", *dim as f64), s("mark_dim", *mark_dim as f64), s("sigma", *sigma)]
            }
            CatalogModel::ControlledLinear { sigma, mark_dim } => {
                vec![s("mark_dim", *mark_dim as f64), s("sigma", *sigma)]
            }
            CatalogModel::GeometricLike { mu, sigma, radius, mark_dim } => {
                vec![s("mark_dim", *mark_dim as f64), s("mu", *mu), s("radius", *radius), s("sigma", *sigma)]
            }
            CatalogModel::JumpLinear { dim, theta, mu, sigma, gamma, eta, kappa, control_gain } => {
                let mut v = vec![
                    s("dim", *dim as f64),
                    s("eta", *eta),
                    s("gamma", *gamma),
                    s("kappa", *kappa),
                    s("mu", *mu),
                    s("sigma", *sigma),
                    s("theta", *theta),
                ];
                if let Some(k) = control_gain {
                    v.insert(0, s("control_gain", *k));
                }
                v
            }
        };
        CatalogId { name: self.name().to_string(), params }
    }
}
