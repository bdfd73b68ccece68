use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::gain::{running_integral, scenario_batch};
use super::{Control, ValueGrid};
use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::noise::LevyNoiseScenario;
use crate::path::{dist, CadlagPath};
use crate::regularity::RegularityReport;
use crate::rng::{substream, StreamTag};
use crate::stats::{Estimate, Z99};

/// Stopping time evaluated per path. The raw time is rounded up to the next
/// decision time of the value grid (which keeps it a stopping time) and
/// clipped to `[s + slot, T - slot]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StoppingTimeSpec {
    Deterministic {
        time: f64,
    },
    /// First node with `|X - center| >= radius`.
    FirstExit {
        center: Vec<f64>,
        radius: f64,
    },
    /// First large jump strictly after `max(time, s)`.
    FirstLargeJumpAfter {
        time: f64,
    },
}

impl StoppingTimeSpec {
    fn raw(&self, path: &CadlagPath, scenario: &LevyNoiseScenario) -> f64 {
        let s = path.start_time;
        let horizon = scenario.horizon;
        match self {
            StoppingTimeSpec::Deterministic { time } => *time,
            StoppingTimeSpec::FirstExit { center, radius } => (0..path.len())
                .filter(|&i| path.nodes[i] > s)
                .find(|&i| dist(path.value(i), center) >= *radius)
                .map_or(horizon, |i| path.nodes[i]),
            StoppingTimeSpec::FirstLargeJumpAfter { time } => {
                let after = time.max(s);
                scenario.large_jumps().map(|e| e.time).find(|t| *t > after).unwrap_or(horizon)
            }
        }
    }

    /// Decision time of `grid` at which the stopping time is read on `path`.
    pub fn evaluate(&self, path: &CadlagPath, scenario: &LevyNoiseScenario, grid: &ValueGrid) -> Result<f64> {
        let slot = grid.slot_length();
        let s = path.start_time;
        let raw = self.raw(path, scenario);
        let snapped = (raw / slot - 1e-9).ceil() * slot;
        let theta = snapped.clamp(s + slot, grid.horizon - slot);
        if !(theta > s && theta < grid.horizon) {
            return Err(Error::Invariant(format!("stopping time {theta} outside ({s}, {})", grid.horizon)));
        }
        Ok(theta)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DppResidual {
    pub s: f64,
    pub x: Vec<f64>,
    pub theta: StoppingTimeSpec,
    /// `v(s, x)` read from the value grid and its standard error.
    pub value: f64,
    pub value_stderr: f64,
    /// Best right-hand side and the candidate that attained it.
    pub rhs: Estimate,
    pub best_candidate: String,
    pub residual: f64,
    pub stderr: f64,
    pub allowance: f64,
    pub pass: bool,
}

fn node_stderr(grid: &ValueGrid, slice: usize, x: &[f64]) -> f64 {
    // largest standard error among the cell corners around x
    let se = grid.stderr_slice(slice);
    let g = &grid.grid;
    let d = g.dim();
    let mut base = Vec::with_capacity(d);
    for axis in 0..d {
        let h = g.spacing(axis);
        let p = ((x[axis] - g.lower[axis]) / h).clamp(0.0, (g.counts[axis] - 1) as f64);
        base.push((p.floor() as usize).min(g.counts[axis] - 2));
    }
    (0..1usize << d)
        .map(|c| {
            let idx: Vec<usize> = (0..d).map(|a| base[a] + ((c >> a) & 1)).collect();
            se[g.flat_index(&idx)]
        })
        .fold(0.0, f64::max)
}

/// `v(s, x) - max_{candidates} E[int_s^theta h + v(theta, X_theta)]` where the
/// candidates are the greedy feedback policy and every constant action, all
/// on the same scenarios. Passes iff `|residual| <= 2.576 stderr + allowance`
/// with the interpolation allowance of the value grid on both sides.
pub fn dpp_residual(
    integrator: &Integrator,
    grid: &ValueGrid,
    s: f64,
    x: &[f64],
    theta: &StoppingTimeSpec,
    scenarios: usize,
    seed: u64,
) -> Result<DppResidual> {
    let slice = grid
        .slice_index(s)
        .ok_or_else(|| Error::argument(format!("s = {s} is not a decision time of the value grid")))?;
    if slice + 2 > grid.slots() {
        return Err(Error::argument("s must leave at least two decision slots before T"));
    }
    if x.len() != grid.grid.dim() {
        return Err(Error::argument("x must have the state dimension"));
    }
    if scenarios < 2 {
        return Err(Error::argument("dpp residual needs at least two scenarios"));
    }
    let horizon = grid.horizon;
    let mut candidates: Vec<(String, Control)> = vec![("greedy".into(), Control::Feedback(grid.feedback_policy()))];
    for (label, a) in grid.actions.labels.iter().zip(&grid.actions.actions) {
        candidates.push((format!("constant:{label}"), Control::constant(a.clone(), horizon)));
    }
    let batch = scenario_batch(integrator, scenarios, seed);
    let mut best: Option<(Estimate, String)> = None;
    for (label, control) in &candidates {
        let samples: Vec<f64> = batch
            .par_iter()
            .map(|sc| {
                let path = integrator.integrate(s, x, control, sc)?;
                let t = theta.evaluate(&path, sc, grid)?;
                let k = grid.slice_index(t).expect("snapped to a decision time");
                let (cont, _) = grid.interpolate(k, path.value_at(t));
                Ok(running_integral(&path, s, t, &grid.running_cost) + cont)
            })
            .collect::<Result<_>>()?;
        let est = Estimate::from_samples(&samples);
        if best.as_ref().is_none_or(|(b, _)| est.mean > b.mean) {
            best = Some((est, label.clone()));
        }
    }
    let (rhs, best_candidate) = best.expect("at least the greedy candidate");
    let (value, _) = grid.interpolate(slice, x);
    let value_stderr = node_stderr(grid, slice, x);
    let residual = value - rhs.mean;
    let stderr = (rhs.stderr.powi(2) + value_stderr.powi(2)).sqrt();
    let allowance = 2.0 * grid.interpolation_allowance();
    Ok(DppResidual {
        s,
        x: x.to_vec(),
        theta: theta.clone(),
        value,
        value_stderr,
        rhs,
        best_candidate,
        residual,
        stderr,
        allowance,
        pass: residual.abs() <= Z99 * stderr + allowance,
    })
}

/// Checks `min_k v(s_k, x_k) >= v(s, x) - tolerance` along random points
/// approaching the target at fractions `rho_k ~ 1/k` of one cell. The
/// tolerance is `rho_max` times the interpolant's Lipschitz bound around the
/// target (largest edge difference per axis, time included) plus 2.576 times
/// the target's standard error. `bump > 0` raises the target value by
/// `bump * tolerance`, the negative control.
pub fn lsc_spot_check(
    grid: &ValueGrid,
    s: f64,
    x: &[f64],
    approaches: usize,
    seed: u64,
    bump: f64,
) -> Result<RegularityReport> {
    let g = &grid.grid;
    let d = g.dim();
    if x.len() != d || approaches == 0 {
        return Err(Error::argument("lsc check needs a state of the grid dimension and approaches"));
    }
    if !(s >= 0.0 && s < grid.horizon) || (0..d).any(|a| !(x[a] > g.lower[a] && x[a] < g.upper[a])) {
        return Err(Error::argument("lsc target must be interior to the value grid"));
    }
    let slot = grid.slot_length();
    let mut rng = substream(seed, StreamTag::Approach, 0);
    let points: Vec<(f64, Vec<f64>, f64)> = (1..=approaches)
        .map(|k| {
            let rho = (0.5 + 0.5 * rng.random::<f64>()) / k as f64;
            let dir = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let sk = (s + dir * rho * slot).clamp(0.0, grid.horizon);
            let xk: Vec<f64> = (0..d)
                .map(|a| {
                    let u = rng.random_range(-1.0..=1.0);
                    (x[a] + u * rho * g.spacing(a)).clamp(g.lower[a], g.upper[a])
                })
                .collect();
            (sk, xk, rho)
        })
        .collect();

    let target = grid.value_at(s, x);
    let rho_max = points.iter().map(|p| p.2).fold(0.0, f64::max);
    let lipschitz = neighbourhood_lipschitz(grid, s, x);
    let slice = ((s / slot).floor() as usize).min(grid.slots() - 1);
    let se = node_stderr(grid, slice, x).max(node_stderr(grid, slice + 1, x));
    let tolerance = rho_max * lipschitz + Z99 * se;
    let raised = target + bump * if tolerance > 0.0 { tolerance } else { 1e-6 };
    let min_approach = points.iter().map(|(sk, xk, _)| grid.value_at(*sk, xk)).fold(f64::INFINITY, f64::min);
    let statistic = raised - min_approach;
    Ok(RegularityReport {
        test_name: "lsc_spot_check".into(),
        statistic,
        threshold: tolerance,
        pass: statistic <= tolerance,
        sample_count: approaches,
        config: json!({ "s": s, "x": x, "approaches": approaches, "seed": seed, "bump": bump }),
        details: json!({
            "target": target,
            "min_approach": min_approach,
            "slack": tolerance - statistic,
            "lipschitz": lipschitz,
            "rho_max": rho_max,
            "stderr": se,
        }),
    })
}

/// Sum over axes (time first) of the largest edge difference among the
/// nodes within one cell of `(s, x)`, per unit cell.
fn neighbourhood_lipschitz(grid: &ValueGrid, s: f64, x: &[f64]) -> f64 {
    let g = &grid.grid;
    let d = g.dim();
    let slot = grid.slot_length();
    let lo_hi = |p: f64, n: usize| -> (usize, usize) {
        let lo = (p.floor() - 1.0).max(0.0) as usize;
        let hi = ((p.ceil() + 1.0) as usize).min(n - 1);
        (lo, hi)
    };
    let (t_lo, t_hi) = lo_hi(s / slot, grid.slots() + 1);
    let ranges: Vec<(usize, usize)> = (0..d).map(|a| lo_hi((x[a] - g.lower[a]) / g.spacing(a), g.counts[a])).collect();
    let mut per_axis = vec![0.0f64; d + 1];
    let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        for t in t_lo..=t_hi {
            let v = grid.slice(t)[g.flat_index(&idx)];
            if t < t_hi {
                per_axis[0] = per_axis[0].max((grid.slice(t + 1)[g.flat_index(&idx)] - v).abs());
            }
            for a in 0..d {
                if idx[a] < ranges[a].1 {
                    let mut n = idx.clone();
                    n[a] += 1;
                    per_axis[a + 1] = per_axis[a + 1].max((grid.slice(t)[g.flat_index(&n)] - v).abs());
                }
            }
        }
        // next multi-index in the box
        let mut a = d;
        loop {
            if a == 0 {
                return per_axis.iter().sum();
            }
            a -= 1;
            if idx[a] < ranges[a].1 {
                idx[a] += 1;
                break;
            }
            idx[a] = ranges[a].0;
        }
    }
}
