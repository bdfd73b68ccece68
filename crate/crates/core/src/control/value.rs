use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gain::running_integral;
use super::{ActionSet, Control, CostSpec, FeedbackPolicy, StateGrid};
use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::noise::LevyNoiseScenario;
use crate::rng::derive_seed;
use crate::stats::Estimate;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGridConfig {
    /// Dyadic level of the decision times.
    pub level: u32,
    pub grid: StateGrid,
    /// Sub-scenarios per time slice, shared by every node and action.
    pub inner_scenarios: usize,
    pub seed: u64,
}

/// Backward-induction value function on `time slices x state grid`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueGrid {
    pub level: u32,
    pub horizon: f64,
    pub grid: StateGrid,
    pub actions: ActionSet,
    pub running_cost: CostSpec,
    pub terminal_cost: CostSpec,
    pub inner_scenarios: usize,
    /// `(slots + 1) * grid.len()` values, slice-major.
    pub values: Vec<f64>,
    /// Standard error of the chosen action's estimate (zero on the last slice).
    pub stderr: Vec<f64>,
    /// `slots * grid.len()` greedy action indices.
    pub policy: Vec<usize>,
    /// Interpolation queries that fell outside the state grid.
    pub clamp_count: usize,
}

impl ValueGrid {
    pub fn slots(&self) -> usize {
        1usize << self.level
    }

    pub fn slot_length(&self) -> f64 {
        self.horizon / self.slots() as f64
    }

    pub fn time(&self, slice: usize) -> f64 {
        self.horizon * slice as f64 / self.slots() as f64
    }

    pub fn slice(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[i * n..(i + 1) * n]
    }

    pub fn stderr_slice(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.stderr[i * n..(i + 1) * n]
    }

    /// Index of the slice at time `t`, if `t` is a decision time.
    pub fn slice_index(&self, t: f64) -> Option<usize> {
        let r = t / self.slot_length();
        let i = r.round();
        ((r - i).abs() < 1e-9 && i >= 0.0 && i as usize <= self.slots()).then_some(i as usize)
    }

    /// Multilinear interpolation on slice `i`; second component flags clamping.
    pub fn interpolate(&self, i: usize, x: &[f64]) -> (f64, bool) {
        self.grid.interpolate(self.slice(i), x)
    }

    /// Value at any `(t, x)`: multilinear in `x`, linear in `t` between slices.
    pub fn value_at(&self, t: f64, x: &[f64]) -> f64 {
        let r = (t / self.slot_length()).clamp(0.0, self.slots() as f64);
        let i0 = (r.floor() as usize).min(self.slots() - 1);
        let w = r - i0 as f64;
        let v0 = self.interpolate(i0, x).0;
        if w == 0.0 {
            return v0;
        }
        let v1 = self.interpolate(i0 + 1, x).0;
        (1.0 - w) * v0 + w * v1
    }

    /// Greedy policy as a feedback control.
    pub fn feedback_policy(&self) -> FeedbackPolicy {
        FeedbackPolicy {
            level: self.level,
            grid: self.grid.clone(),
            actions: self.actions.clone(),
            table: self.policy.clone(),
        }
    }

    /// `||h|| T + ||j||`.
    pub fn bound(&self) -> f64 {
        self.running_cost.sup_norm() * self.horizon + self.terminal_cost.sup_norm()
    }

    /// Largest second difference along any axis over all slices, divided by
    /// 8 and summed over the axes: the multilinear interpolation error bound.
    pub fn interpolation_allowance(&self) -> f64 {
        let n = self.grid.len();
        let d = self.grid.dim();
        let mut per_axis = vec![0.0f64; d];
        for slice in 0..=self.slots() {
            let v = self.slice(slice);
            for flat in 0..n {
                let idx = self.grid.multi_index(flat);
                for axis in 0..d {
                    if idx[axis] == 0 || idx[axis] + 1 == self.grid.counts[axis] {
                        continue;
                    }
                    let mut lo = idx.clone();
                    lo[axis] -= 1;
                    let mut hi = idx.clone();
                    hi[axis] += 1;
                    let second = v[self.grid.flat_index(&hi)] - 2.0 * v[flat] + v[self.grid.flat_index(&lo)];
                    per_axis[axis] = per_axis[axis].max(second.abs());
                }
            }
        }
        per_axis.iter().sum::<f64>() / 8.0
    }

    /// CSV with columns `t, x_*, value, greedy_action_index` (the last slice has no action).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t".to_string()];
        header.extend((0..self.grid.dim()).map(|i| format!("x_{i}")));
        header.push("value".into());
        header.push("greedy_action_index".into());
        w.write_record(&header)?;
        let n = self.grid.len();
        for slice in 0..=self.slots() {
            for flat in 0..n {
                let mut row = vec![self.time(slice).to_string()];
                row.extend(self.grid.point(flat).iter().map(f64::to_string));
                row.push(self.values[slice * n + flat].to_string());
                row.push(if slice < self.slots() { self.policy[slice * n + flat].to_string() } else { String::new() });
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

struct NodeResult {
    value: f64,
    stderr: f64,
    action: usize,
    clamps: usize,
}

/// One-step backward induction
/// `v(t_i, x) = max_a E[int_{t_i}^{t_{i+1}} h + v(t_{i+1}, X_{t_{i+1}})]`
/// with constant actions over each slot, the inner expectation taken over
/// sub-scenarios shared across nodes and actions, and multilinear
/// interpolation of the next slice.
pub fn solve_value(
    integrator: &Integrator,
    h: &CostSpec,
    j: &CostSpec,
    actions: &ActionSet,
    cfg: &ValueGridConfig,
) -> Result<ValueGrid> {
    let noise = integrator.noise();
    let dims = integrator.coefficients().dims();
    if cfg.grid.dim() != dims.state {
        return Err(Error::config("state grid dimension differs from the model"));
    }
    if actions.dim() != dims.control {
        return Err(Error::config("action dimension differs from the model's control dimension"));
    }
    if cfg.level > noise.level {
        return Err(Error::config(format!(
            "value level {} is finer than the simulation grid level {}",
            cfg.level, noise.level
        )));
    }
    if cfg.inner_scenarios == 0 {
        return Err(Error::config("inner_scenarios must be positive"));
    }
    h.validate(dims.state)?;
    j.validate(dims.state)?;

    let slots = 1usize << cfg.level;
    let n = cfg.grid.len();
    let horizon = noise.horizon;
    let points = cfg.grid.points();
    let controls: Vec<Control> = actions.actions.iter().map(|a| Control::constant(a.clone(), horizon)).collect();
    let scenario_seed = derive_seed(cfg.seed, 0x76616c7565);

    let mut values = vec![0.0; (slots + 1) * n];
    let mut stderr = vec![0.0; (slots + 1) * n];
    let mut policy = vec![0usize; slots * n];
    let mut clamp_count = 0usize;
    for (flat, p) in points.iter().enumerate() {
        values[slots * n + flat] = j.terminal(p);
    }

    for i in (0..slots).rev() {
        let (t0, t1) = (horizon * i as f64 / slots as f64, horizon * (i + 1) as f64 / slots as f64);
        let batch: Vec<LevyNoiseScenario> = (0..cfg.inner_scenarios as u64)
            .into_par_iter()
            .map(|k| noise.scenario(scenario_seed, i as u64 * cfg.inner_scenarios as u64 + k))
            .collect();
        let next = &values[(i + 1) * n..(i + 2) * n];
        let results: Vec<NodeResult> = points
            .par_iter()
            .map(|x| {
                let mut best: Option<(Estimate, usize)> = None;
                let mut clamps = 0;
                for (ai, control) in controls.iter().enumerate() {
                    let mut samples = Vec::with_capacity(batch.len());
                    for sc in &batch {
                        let path = integrator.integrate_until(t0, x, control, sc, t1)?;
                        let (cont, clamped) = cfg.grid.interpolate(next, path.final_value());
                        clamps += usize::from(clamped);
                        samples.push(running_integral(&path, t0, t1, h) + cont);
                    }
                    let est = Estimate::from_samples(&samples);
                    if best.as_ref().is_none_or(|(b, _)| est.mean > b.mean) {
                        best = Some((est, ai));
                    }
                }
                let (est, action) = best.expect("action set is nonempty");
                Ok(NodeResult { value: est.mean, stderr: est.stderr, action, clamps })
            })
            .collect::<Result<_>>()?;
        for (flat, r) in results.into_iter().enumerate() {
            values[i * n + flat] = r.value;
            stderr[i * n + flat] = r.stderr;
            policy[i * n + flat] = r.action;
            clamp_count += r.clamps;
        }
    }

    let grid = ValueGrid {
        level: cfg.level,
        horizon,
        grid: cfg.grid.clone(),
        actions: actions.clone(),
        running_cost: h.clone(),
        terminal_cost: j.clone(),
        inner_scenarios: cfg.inner_scenarios,
        values,
        stderr,
        policy,
        clamp_count,
    };
    let bound = grid.bound();
    let slack = 1e-9 * (1.0 + bound);
    if let Some(v) = grid.values.iter().find(|v| !(v.abs() <= bound + slack)) {
        return Err(Error::Invariant(format!("value {v} exceeds the bound {bound}")));
    }
    Ok(grid)
}
