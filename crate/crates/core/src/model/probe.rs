//! Finite-difference probes of the Lipschitz and linear-growth hypotheses.
//!
//! Each sample is a tuple `(t, x, y, a1, a2, z)`: `x` and `y` are the ends of
//! a central difference around a uniform centre, with a separation drawn
//! log-uniformly in `[1e-4, 1]`; the same construction gives the action
//! pair. Sample `i` comes from its own substream, so estimates for `n`
//! samples are a prefix maximum of those for any larger `n`.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CatalogId, Coefficients, PerCoefficient, StateBox, COEFFICIENT_NAMES};
use crate::error::{Error, Result};
use crate::noise::euclid;
use crate::rng::{substream, StreamTag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeDomain {
    pub state_box: StateBox,
    /// Required when the coefficients take a control.
    pub action_box: Option<StateBox>,
    pub horizon: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisProbeReport {
    pub catalog_id: CatalogId,
    pub estimated_lipschitz_x: PerCoefficient<f64>,
    pub estimated_lipschitz_a: PerCoefficient<f64>,
    pub estimated_growth: PerCoefficient<f64>,
    pub declared_lipschitz_x: PerCoefficient<Option<f64>>,
    pub sample_count: usize,
    pub state_box: StateBox,
    pub action_box: Option<StateBox>,
}

impl HypothesisProbeReport {
    /// Estimates of `b`, `alpha` and `g` within their known constants (plus
    /// rounding). `f` only needs continuity and is never checked.
    pub fn within_declared(&self) -> bool {
        let est = self.estimated_lipschitz_x.as_array();
        let dec = self.declared_lipschitz_x.as_array();
        (0..3).all(|i| dec[i].is_none_or(|k| est[i] <= k * (1.0 + 1e-9) + 1e-12))
    }
}

fn uniform_in(b: &StateBox, rng: &mut ChaCha12Rng) -> Vec<f64> {
    b.lower.iter().zip(&b.upper).map(|(l, u)| l + (u - l) * rng.random::<f64>()).collect()
}

fn direction(dim: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = euclid(&g);
        if n > 0.0 {
            return g.into_iter().map(|v| v / n).collect();
        }
    }
}

/// Central pair around a uniform centre, clamped into the box.
fn pair(b: &StateBox, rng: &mut ChaCha12Rng) -> (Vec<f64>, Vec<f64>) {
    let c = uniform_in(b, rng);
    let u = direction(b.dim(), rng);
    let r = 10f64.powf(-4.0 + 4.0 * rng.random::<f64>());
    let mut x: Vec<f64> = c.iter().zip(&u).map(|(c, u)| c - 0.5 * r * u).collect();
    let mut y: Vec<f64> = c.iter().zip(&u).map(|(c, u)| c + 0.5 * r * u).collect();
    b.clamp(&mut x);
    b.clamp(&mut y);
    (x, y)
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
}

struct Sample {
    lip_x: [f64; 4],
    lip_a: [f64; 4],
    growth: [f64; 4],
}

fn evaluate(
    coeffs: &dyn Coefficients,
    which: usize,
    t: f64,
    x: &[f64],
    z: &[f64],
    a: &[f64],
    out: &mut Vec<f64>,
) -> Result<()> {
    let d = coeffs.dims();
    match which {
        0 => {
            out.resize(d.state, 0.0);
            coeffs.drift(t, x, a, out)
        }
        1 => {
            out.resize(d.state * d.brownian, 0.0);
            coeffs.diffusion(t, x, a, out)
        }
        2 => {
            out.resize(d.state, 0.0);
            coeffs.small_jump(x, t, z, a, out)
        }
        _ => {
            out.resize(d.state, 0.0);
            coeffs.large_jump(x, t, z, a, out)
        }
    }
    if out.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Probe {
            coefficient: COEFFICIENT_NAMES[which].to_string(),
            input: format!("t = {t}, x = {x:?}, z = {z:?}, a = {a:?}"),
        })
    }
}

fn probe_one(coeffs: &dyn Coefficients, domain: &ProbeDomain, seed: u64, index: u64) -> Result<Sample> {
    let dims = coeffs.dims();
    let mut rng = substream(seed, StreamTag::Probe, index);
    let t = domain.horizon * rng.random::<f64>();
    let (x, y) = pair(&domain.state_box, &mut rng);
    let (a1, a2) = match &domain.action_box {
        Some(b) if dims.control > 0 => pair(b, &mut rng),
        _ => (vec![0.0; dims.control], vec![0.0; dims.control]),
    };
    let z_small = {
        let r = rng.random::<f64>().powf(1.0 / dims.mark as f64).max(f64::MIN_POSITIVE);
        direction(dims.mark, &mut rng).into_iter().map(|v| v * r).collect::<Vec<_>>()
    };
    let z_large = {
        let r = 2.0 - rng.random::<f64>();
        direction(dims.mark, &mut rng).into_iter().map(|v| v * r).collect::<Vec<_>>()
    };
    let dx = diff_norm(&x, &y);
    let da = diff_norm(&a1, &a2);
    let norm_x = euclid(&x);

    let mut s = Sample { lip_x: [0.0; 4], lip_a: [0.0; 4], growth: [0.0; 4] };
    let (mut cx, mut cy, mut ca) = (Vec::new(), Vec::new(), Vec::new());
    for which in 0..4 {
        let z = if which == 3 { &z_large } else { &z_small };
        evaluate(coeffs, which, t, &x, z, &a1, &mut cx)?;
        evaluate(coeffs, which, t, &y, z, &a1, &mut cy)?;
        evaluate(coeffs, which, t, &x, z, &a2, &mut ca)?;
        if dx > 0.0 {
            s.lip_x[which] = diff_norm(&cx, &cy) / dx;
        }
        if da > 0.0 {
            s.lip_a[which] = diff_norm(&cx, &ca) / da;
        }
        s.growth[which] = euclid(&cx) / (1.0 + norm_x);
    }
    Ok(s)
}

/// Estimates Lipschitz constants (in state and in control) and linear-growth
/// constants of every coefficient map by sampling `samples` tuples.
pub fn probe_hypotheses(
    coeffs: &dyn Coefficients,
    domain: &ProbeDomain,
    samples: usize,
    seed: u64,
) -> Result<HypothesisProbeReport> {
    let dims = coeffs.dims();
    if samples < 2 {
        return Err(Error::argument("probe needs at least 2 samples"));
    }
    if domain.state_box.dim() != dims.state || domain.state_box.is_degenerate() {
        return Err(Error::argument("state box must match the state dimension and be nondegenerate"));
    }
    if dims.control > 0 {
        match &domain.action_box {
            Some(b) if b.dim() == dims.control && !b.is_degenerate() => {}
            _ => return Err(Error::argument("controlled coefficients need a nondegenerate action box")),
        }
    }
    let results: Vec<Sample> =
        (0..samples as u64).into_par_iter().map(|i| probe_one(coeffs, domain, seed, i)).collect::<Result<_>>()?;

    let mut lip_x = [0.0f64; 4];
    let mut lip_a = [0.0f64; 4];
    let mut growth = [0.0f64; 4];
    for s in &results {
        for k in 0..4 {
            lip_x[k] = lip_x[k].max(s.lip_x[k]);
            lip_a[k] = lip_a[k].max(s.lip_a[k]);
            growth[k] = growth[k].max(s.growth[k]);
        }
    }
    Ok(HypothesisProbeReport {
        catalog_id: coeffs.catalog_id(),
        estimated_lipschitz_x: PerCoefficient::from_array(lip_x),
        estimated_lipschitz_a: PerCoefficient::from_array(lip_a),
        estimated_growth: PerCoefficient::from_array(growth),
        declared_lipschitz_x: coeffs.known_constants().lipschitz_x,
        sample_count: samples,
        state_box: domain.state_box.clone(),
        action_box: domain.action_box.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{CatalogModel, Dims};

    fn domain(radius: f64, action: Option<f64>) -> ProbeDomain {
        ProbeDomain {
            state_box: StateBox::symmetric(1, radius),
            action_box: action.map(|r| StateBox::symmetric(1, r)),
            horizon: 1.0,
        }
    }

    #[test]
    fn linear_drift_has_unit_constant() {
        let m = CatalogModel::ornstein_uhlenbeck(1.0, 0.0, 0.5);
        let r = probe_hypotheses(&m, &domain(10.0, None), 2000, 1).unwrap();
        let k = r.estimated_lipschitz_x.drift;
        assert!((0.99..=1.0).contains(&k), "{k}");
        assert_eq!(r.estimated_lipschitz_x.diffusion, 0.0);
        assert!(r.within_declared());
    }

    #[test]
    fn constant_coefficients_have_zero_constant() {
        let m = CatalogModel::constant_drift(vec![3.0]);
        let r = probe_hypotheses(&m, &domain(10.0, None), 500, 2).unwrap();
        assert_eq!(r.estimated_lipschitz_x.as_array(), [0.0; 4]);
    }

    #[test]
    fn bilinear_drift_sees_action_bound() {
        let m = CatalogModel::controlled_linear(0.0);
        let r = probe_hypotheses(&m, &domain(5.0, Some(2.0)), 10_000, 3).unwrap();
        let k = r.estimated_lipschitz_x.drift;
        assert!((1.9..=2.0 * (1.0 + 1e-12)).contains(&k), "{k}");
    }

    #[test]
    fn nested_samples_are_monotone() {
        let m = CatalogModel::from_catalog("geometric-like", &Default::default()).unwrap();
        let mut prev = [0.0; 4];
        for n in [10, 100, 1000] {
            let r = probe_hypotheses(&m, &domain(20.0, None), n, 4).unwrap();
            let cur = r.estimated_lipschitz_x.as_array();
            assert!(cur.iter().zip(&prev).all(|(c, p)| c >= p));
            prev = cur;
        }
    }

    struct Broken;
    impl Coefficients for Broken {
        fn dims(&self) -> Dims {
            Dims { state: 1, brownian: 1, mark: 1, control: 0 }
        }
        fn drift(&self, _t: f64, x: &[f64], _a: &[f64], out: &mut [f64]) {
            out[0] = x[0].ln();
        }
        fn diffusion(&self, _t: f64, _x: &[f64], _a: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn small_jump(&self, _x: &[f64], _t: f64, _z: &[f64], _a: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn large_jump(&self, _x: &[f64], _t: f64, _z: &[f64], _a: &[f64], out: &mut [f64]) {
            out[0] = 0.0;
        }
        fn catalog_id(&self) -> CatalogId {
            CatalogId { name: "broken".into(), params: vec![] }
        }
    }

    #[test]
    fn nan_names_the_coefficient() {
        let err = probe_hypotheses(&Broken, &domain(1.0, None), 100, 0).unwrap_err();
        match err {
            Error::Probe { coefficient, .. } => assert_eq!(coefficient, "drift"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = CatalogModel::controlled_drift(0.0);
        assert!(probe_hypotheses(&m, &domain(1.0, Some(1.0)), 1, 0).is_err());
        assert!(probe_hypotheses(&m, &domain(1.0, None), 10, 0).is_err());
    }
}
