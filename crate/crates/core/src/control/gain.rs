use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ActionSet, Control, SimpleControl};
use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::noise::LevyNoiseScenario;
use crate::path::CadlagPath;
use crate::stats::Estimate;

/// Bounded running cost `h(t, x, a)` or terminal cost `j(x)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CostSpec {
    Zero,
    Constant {
        value: f64,
    },
    /// `clamp(w . x, -bound, bound)`.
    Linear {
        weights: Vec<f64>,
        bound: f64,
    },
    /// `-min(|x - center|, bound)`.
    NegDistance {
        center: Vec<f64>,
        bound: f64,
    },
    /// `-min(weight |a|^2, bound)`.
    ActionPenalty {
        weight: f64,
        bound: f64,
    },
}

impl CostSpec {
    pub fn validate(&self, state_dim: usize) -> Result<()> {
        let ok = match self {
            CostSpec::Zero => true,
            CostSpec::Constant { value } => value.is_finite(),
            CostSpec::Linear { weights, bound } => weights.len() == state_dim && *bound >= 0.0 && bound.is_finite(),
            CostSpec::NegDistance { center, bound } => center.len() == state_dim && *bound >= 0.0 && bound.is_finite(),
            CostSpec::ActionPenalty { weight, bound } => weight.is_finite() && *bound >= 0.0 && bound.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid cost {self:?} for state dimension {state_dim}")))
        }
    }

    pub fn evaluate(&self, _t: f64, x: &[f64], a: &[f64]) -> f64 {
        match self {
            CostSpec::Zero => 0.0,
            CostSpec::Constant { value } => *value,
            CostSpec::Linear { weights, bound } => {
                let v: f64 = weights.iter().zip(x).map(|(w, x)| w * x).sum();
                v.clamp(-bound, *bound)
            }
            CostSpec::NegDistance { center, bound } => {
                let d = crate::path::dist(x, center);
                -d.min(*bound)
            }
            CostSpec::ActionPenalty { weight, bound } => {
                let n: f64 = a.iter().map(|v| v * v).sum();
                -(weight * n).min(*bound)
            }
        }
    }

    pub fn terminal(&self, x: &[f64]) -> f64 {
        self.evaluate(f64::NAN, x, &[])
    }

    pub fn sup_norm(&self) -> f64 {
        match self {
            CostSpec::Zero => 0.0,
            CostSpec::Constant { value } => value.abs(),
            CostSpec::Linear { bound, .. }
            | CostSpec::NegDistance { bound, .. }
            | CostSpec::ActionPenalty { bound, .. } => *bound,
        }
    }
}

/// Left-endpoint sum of `h` over the path nodes in `[from, to)`.
pub(crate) fn running_integral(path: &CadlagPath, from: f64, to: f64, h: &CostSpec) -> f64 {
    if matches!(h, CostSpec::Zero) {
        return 0.0;
    }
    let mut total = 0.0;
    let first = path.nodes.partition_point(|t| *t < from);
    for i in first..path.len().saturating_sub(1) {
        let t = path.nodes[i];
        if t >= to {
            break;
        }
        let width = path.nodes[i + 1].min(to) - t;
        total += h.evaluate(t, path.value(i), path.control(i)) * width;
    }
    total
}

pub(crate) fn gain_on(
    integrator: &Integrator,
    s: f64,
    x: &[f64],
    control: &Control,
    h: &CostSpec,
    j: &CostSpec,
    scenarios: &[LevyNoiseScenario],
) -> Result<Estimate> {
    let samples: Vec<f64> = scenarios
        .par_iter()
        .map(|sc| {
            let path = integrator.integrate(s, x, control, sc)?;
            Ok(running_integral(&path, path.start_time, path.end_time(), h) + j.terminal(path.final_value()))
        })
        .collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}

pub(crate) fn scenario_batch(integrator: &Integrator, count: usize, seed: u64) -> Vec<LevyNoiseScenario> {
    (0..count as u64).into_par_iter().map(|i| integrator.noise().scenario(seed, i)).collect()
}

/// Monte Carlo estimate of `E[int_s^T h(r, X_r, a_r) dr + j(X_T)]`.
#[allow(clippy::too_many_arguments)]
pub fn gain(
    integrator: &Integrator,
    s: f64,
    x: &[f64],
    control: &Control,
    h: &CostSpec,
    j: &CostSpec,
    scenarios: usize,
    seed: u64,
) -> Result<Estimate> {
    if scenarios == 0 {
        return Err(Error::argument("gain needs at least one scenario"));
    }
    gain_on(integrator, s, x, control, h, j, &scenario_batch(integrator, scenarios, seed))
}

/// Largest number of open-loop controls `enumerate_value` will try.
pub const ENUMERATION_LIMIT: usize = 10_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationResult {
    pub value: Estimate,
    pub best: SimpleControl,
    /// Gains of every control in lexicographic order of the index vectors.
    pub gains: Vec<Estimate>,
}

/// Best gain over every open-loop simple control of dyadic level `level`,
/// all evaluated on the same scenarios. Ties go to the lexicographically
/// first control.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_value(
    integrator: &Integrator,
    s: f64,
    x: &[f64],
    h: &CostSpec,
    j: &CostSpec,
    actions: &ActionSet,
    level: u32,
    scenarios: usize,
    seed: u64,
) -> Result<EnumerationResult> {
    let pieces = 1usize << level.min(8);
    let total = (actions.len() as f64).powi(pieces as i32);
    if level > 3 || total > ENUMERATION_LIMIT as f64 {
        return Err(Error::argument(format!(
            "{} actions at level {level} give {total} controls (limit {ENUMERATION_LIMIT}, level <= 3); lower the level or the action count",
            actions.len()
        )));
    }
    if scenarios == 0 {
        return Err(Error::argument("enumeration needs at least one scenario"));
    }
    let batch = scenario_batch(integrator, scenarios, seed);
    let horizon = integrator.noise().horizon;
    let mut indices = vec![0usize; pieces];
    let mut gains = Vec::with_capacity(total as usize);
    let mut best: Option<(Estimate, Vec<usize>)> = None;
    loop {
        let control = SimpleControl::new(level, indices.clone(), actions)?;
        let g = gain_on(integrator, s, x, &Control::simple(&control, actions, horizon), h, j, &batch)?;
        if best.as_ref().is_none_or(|(b, _)| g.mean > b.mean) {
            best = Some((g, indices.clone()));
        }
        gains.push(g);
        // odometer over index vectors, last piece fastest
        let mut pos = pieces;
        loop {
            if pos == 0 {
                let (value, idx) = best.expect("at least one control");
                return Ok(EnumerationResult { value, best: SimpleControl { level, indices: idx }, gains });
            }
            pos -= 1;
            indices[pos] += 1;
            if indices[pos] < actions.len() {
                break;
            }
            indices[pos] = 0;
        }
    }
}
