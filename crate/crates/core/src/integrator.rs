//! Path construction on a frozen scenario.
//!
//! Between large-jump times the state follows explicit Euler–Maruyama cells
//! of the small-jump equation (drift, diffusion, small jumps at the cell's
//! left state and the compensator as a deterministic drift). A large jump at
//! `tau` splits its cell using the scenario's bridge value of `W(tau)`, and
//! the state is updated exactly as `X(tau) = X(tau-) + f(X(tau-), tau, z, a)`.
//! The stepping restarted at any node from the state stored there reproduces
//! the remaining path bit for bit.

use std::sync::Arc;

use rayon::prelude::*;

use crate::control::Control;
use crate::error::{Error, Result};
use crate::model::{Coefficients, StateBox};
use crate::noise::{JumpEvent, LevyNoiseScenario, NoiseSetup, Region};
use crate::path::{CadlagPath, FlowField, PathMeta};
use crate::rng::{substream, StreamTag};

/// Size of the fixed mark sample used for the small-jump compensator.
pub const COMPENSATOR_POINTS: usize = 32;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntegratorOptions {
    /// Clamp the state into this box after every node (off by default).
    pub clamp: Option<StateBox>,
}

pub struct Integrator {
    coeffs: Arc<dyn Coefficients>,
    noise: NoiseSetup,
    compensator_marks: Vec<Vec<f64>>,
    options: IntegratorOptions,
}

struct Workspace {
    drift: Vec<f64>,
    diffusion: Vec<f64>,
    jump: Vec<f64>,
    acc: Vec<f64>,
}

#[derive(Clone, Copy)]
struct LargeJump<'a> {
    time: f64,
    cell: usize,
    mark: &'a [f64],
    offset: &'a [f64],
}

enum StartAt {
    Grid(usize),
    /// A large-jump time strictly inside cell `cell`, with `W(tau) - W(t_cell)`.
    Inside {
        time: f64,
        cell: usize,
        offset: Vec<f64>,
    },
}

/// Snaps `s` down to the grid; returns the grid index and whether it moved.
pub fn snap_down(s: f64, dt: f64) -> (usize, bool) {
    let r = s / dt;
    let k = if (r - r.round()).abs() < 1e-9 { r.round() } else { r.floor() };
    let k = k.max(0.0) as usize;
    (k, k as f64 * dt != s)
}

impl Integrator {
    pub fn new(
        coeffs: Arc<dyn Coefficients>,
        noise: NoiseSetup,
        compensator_seed: u64,
        options: IntegratorOptions,
    ) -> Result<Self> {
        let dims = coeffs.dims();
        if dims.brownian != noise.brownian_dim {
            return Err(Error::config(format!(
                "model expects a {}-dimensional Brownian motion, noise has {}",
                dims.brownian, noise.brownian_dim
            )));
        }
        if dims.mark != noise.measure.mark_dim {
            return Err(Error::config(format!(
                "model expects {}-dimensional marks, noise has {}",
                dims.mark, noise.measure.mark_dim
            )));
        }
        if let Some(b) = &options.clamp {
            if b.dim() != dims.state {
                return Err(Error::config("clamp box dimension differs from the state dimension"));
            }
        }
        let compensator_marks = compensator_sample(&noise, compensator_seed);
        Ok(Integrator { coeffs, noise, compensator_marks, options })
    }

    pub fn coefficients(&self) -> &dyn Coefficients {
        self.coeffs.as_ref()
    }

    pub fn coefficients_arc(&self) -> Arc<dyn Coefficients> {
        Arc::clone(&self.coeffs)
    }

    pub fn noise(&self) -> &NoiseSetup {
        &self.noise
    }

    pub fn options(&self) -> &IntegratorOptions {
        &self.options
    }

    pub fn compensator_marks(&self) -> &[Vec<f64>] {
        &self.compensator_marks
    }

    /// Same coefficients and compensator on a different grid level.
    pub fn with_level(&self, level: u32) -> Integrator {
        Integrator {
            coeffs: Arc::clone(&self.coeffs),
            noise: self.noise.with_level(level),
            compensator_marks: self.compensator_marks.clone(),
            options: self.options.clone(),
        }
    }

    fn workspace(&self) -> Workspace {
        let d = self.coeffs.dims();
        Workspace {
            drift: vec![0.0; d.state],
            diffusion: vec![0.0; d.state * d.brownian],
            jump: vec![0.0; d.state],
            acc: vec![0.0; d.state],
        }
    }

    fn compensator_into(&self, state: &[f64], t: f64, a: &[f64], ws: &mut Workspace) {
        let rate = self.noise.measure.small_intensity;
        ws.acc.iter_mut().for_each(|v| *v = 0.0);
        for z in &self.compensator_marks {
            self.coeffs.small_jump(state, t, z, a, &mut ws.jump);
            for (acc, g) in ws.acc.iter_mut().zip(&ws.jump) {
                *acc += g;
            }
        }
        let n = self.compensator_marks.len() as f64;
        ws.acc.iter_mut().for_each(|v| *v = rate * (*v / n));
    }

    /// Compensator drift `lambda_0 E[g(state, t, Z, a)]`, estimated on the fixed mark sample.
    pub fn compensator(&self, state: &[f64], t: f64, a: &[f64]) -> Vec<f64> {
        let mut ws = self.workspace();
        if self.compensator_marks.is_empty() {
            return vec![0.0; state.len()];
        }
        self.compensator_into(state, t, a, &mut ws);
        ws.acc
    }

    fn step_into(
        &self,
        t: f64,
        dt: f64,
        state: &[f64],
        dw: &[f64],
        jumps: &[JumpEvent],
        a: &[f64],
        ws: &mut Workspace,
        out: &mut [f64],
    ) {
        let d = state.len();
        let m = dw.len();
        self.coeffs.drift(t, state, a, &mut ws.drift);
        self.coeffs.diffusion(t, state, a, &mut ws.diffusion);
        for i in 0..d {
            let mut v = state[i] + ws.drift[i] * dt;
            for j in 0..m {
                v += ws.diffusion[i * m + j] * dw[j];
            }
            out[i] = v;
        }
        if !self.coeffs.has_small_jumps() {
            return;
        }
        for ev in jumps.iter().filter(|e| e.region == Region::Small) {
            self.coeffs.small_jump(state, ev.time, &ev.mark, a, &mut ws.jump);
            for (o, g) in out.iter_mut().zip(&ws.jump) {
                *o += g;
            }
        }
        if !self.compensator_marks.is_empty() {
            self.compensator_into(state, t, a, ws);
            for (o, c) in out.iter_mut().zip(&ws.acc) {
                *o -= dt * c;
            }
        }
    }

    /// One Euler cell of the small-jump equation. Large-region events in
    /// `jumps` are ignored.
    pub fn step_small(
        &self,
        t: f64,
        dt: f64,
        state: &[f64],
        dw: &[f64],
        jumps: &[JumpEvent],
        a: &[f64],
    ) -> Result<Vec<f64>> {
        if !(dt > 0.0) {
            return Err(Error::argument(format!("step length must be positive, got {dt}")));
        }
        if dw.iter().any(|v| !v.is_finite()) {
            return Err(Error::argument("Brownian increment is not finite"));
        }
        let mut ws = self.workspace();
        let mut out = vec![0.0; state.len()];
        self.step_into(t, dt, state, dw, jumps, a, &mut ws, &mut out);
        check_finite(t + dt, &out)?;
        Ok(out)
    }

    /// Solution started at `(s, x)` on the whole horizon. An off-grid `s` is
    /// snapped down to the grid and recorded in the path metadata.
    pub fn integrate(&self, s: f64, x: &[f64], control: &Control, scenario: &LevyNoiseScenario) -> Result<CadlagPath> {
        self.integrate_until(s, x, control, scenario, scenario.horizon)
    }

    /// As [`Integrator::integrate`], stopping at the grid time `end`.
    pub fn integrate_until(
        &self,
        s: f64,
        x: &[f64],
        control: &Control,
        scenario: &LevyNoiseScenario,
        end: f64,
    ) -> Result<CadlagPath> {
        let dt = scenario.grid_step();
        if !(s >= 0.0 && s <= scenario.horizon) {
            return Err(Error::argument(format!("start time {s} outside [0, {}]", scenario.horizon)));
        }
        let (k, snapped) = snap_down(s, dt);
        let (end_k, _) = snap_down(end, dt);
        let end_k = end_k.min(scenario.cells());
        if end_k < k {
            return Err(Error::argument("end time precedes the start time"));
        }
        let mut path = self.run(StartAt::Grid(k), x, control, scenario, end_k, None)?;
        if snapped {
            path.meta.snapped_from = Some(s);
        }
        Ok(path)
    }

    /// Restarts at node `u` of `path` from the state stored there, on the same scenario.
    pub fn flow_restart(
        &self,
        u: f64,
        path: &CadlagPath,
        control: &Control,
        scenario: &LevyNoiseScenario,
    ) -> Result<CadlagPath> {
        let i = self.restart_node(u, path)?;
        self.restart_with_state(u, path.value(i), path, control, scenario)
    }

    fn restart_node(&self, u: f64, path: &CadlagPath) -> Result<usize> {
        if u < path.start_time {
            return Err(Error::argument(format!("restart time {u} precedes the start time {}", path.start_time)));
        }
        path.node_index(u).ok_or_else(|| Error::argument(format!("restart time {u} is not a node of the path")))
    }

    /// Restart at node `u` of `path` from an arbitrary `state`; feedback
    /// decisions already taken by `path` for the current slot are kept.
    pub fn restart_with_state(
        &self,
        u: f64,
        state: &[f64],
        path: &CadlagPath,
        control: &Control,
        scenario: &LevyNoiseScenario,
    ) -> Result<CadlagPath> {
        self.restart_node(u, path)?;
        let dt = scenario.grid_step();
        let (k, off_grid) = snap_down(u, dt);
        let start = if !off_grid {
            StartAt::Grid(k)
        } else {
            let (j, event) = scenario
                .large_jumps()
                .enumerate()
                .find(|(_, e)| e.time == u)
                .ok_or_else(|| Error::argument(format!("node {u} is neither a grid time nor a large-jump time")))?;
            let m = scenario.brownian_dim;
            StartAt::Inside {
                time: u,
                cell: scenario.cell_of(event.time),
                offset: scenario.bridge[j * m..(j + 1) * m].to_vec(),
            }
        };
        let first_cell = match &start {
            StartAt::Grid(k) => *k,
            StartAt::Inside { cell, .. } => *cell,
        };
        let preset = match control {
            Control::Feedback(p) if first_cell < scenario.cells() => {
                let slot = first_cell >> (scenario.level - p.level.min(scenario.level));
                path.decisions.get(slot).copied().flatten().map(|d| (slot, d))
            }
            _ => None,
        };
        let (end_k, _) = snap_down(path.end_time(), dt);
        self.run(start, state, control, scenario, end_k, preset)
    }

    fn run(
        &self,
        start: StartAt,
        x: &[f64],
        control: &Control,
        sc: &LevyNoiseScenario,
        end_cell: usize,
        preset: Option<(usize, usize)>,
    ) -> Result<CadlagPath> {
        let dims = self.coeffs.dims();
        let (d, m, l) = (dims.state, dims.brownian, dims.control);
        if x.len() != d {
            return Err(Error::argument(format!("start state has length {}, expected {d}", x.len())));
        }
        if sc.brownian_dim != m {
            return Err(Error::argument("scenario Brownian dimension differs from the model"));
        }
        if control.dim() != l {
            return Err(Error::argument(format!("control has dimension {}, the model expects {l}", control.dim())));
        }
        if let Control::Feedback(p) = control {
            if p.level > sc.level {
                return Err(Error::argument("feedback policy is finer than the scenario grid"));
            }
            if p.grid.dim() != d {
                return Err(Error::argument("feedback grid dimension differs from the state dimension"));
            }
        }

        let dt = sc.grid_step();
        let grid = |k: usize| k as f64 * dt;
        let large: Vec<LargeJump> = if self.coeffs.has_large_jumps() {
            sc.large_jumps()
                .enumerate()
                .map(|(j, e)| LargeJump {
                    time: e.time,
                    cell: sc.cell_of(e.time),
                    mark: &e.mark,
                    offset: &sc.bridge[j * m..(j + 1) * m],
                })
                .collect()
        } else {
            Vec::new()
        };

        let capacity = end_cell + 2 + large.len();
        let mut path = CadlagPath {
            dim: d,
            control_dim: l,
            start_time: 0.0,
            start_state: x.to_vec(),
            nodes: Vec::with_capacity(capacity),
            values: Vec::with_capacity(capacity * d),
            pre_jump: Vec::with_capacity(capacity),
            controls: Vec::with_capacity(capacity * l),
            decisions: match control {
                Control::Feedback(p) => vec![None; p.slots()],
                _ => Vec::new(),
            },
            meta: PathMeta::default(),
        };
        let zero_control = vec![0.0; l];
        let push = |path: &mut CadlagPath, t: f64, v: &[f64], pre: Option<Vec<f64>>| {
            path.nodes.push(t);
            path.values.extend_from_slice(v);
            path.pre_jump.push(pre);
            path.controls.extend_from_slice(&zero_control);
        };

        let (start_time, mut cell, mut w_cur) = match start {
            StartAt::Grid(k) => {
                for i in 0..=k {
                    push(&mut path, grid(i), x, None);
                }
                (grid(k), k, vec![0.0; m])
            }
            StartAt::Inside { time, cell, offset } => {
                for i in 0..=cell {
                    push(&mut path, grid(i), x, None);
                }
                push(&mut path, time, x, None);
                (time, cell, offset)
            }
        };
        path.start_time = start_time;
        if let Some((slot, decision)) = preset {
            path.decisions[slot] = Some(decision);
        }

        let mut lp = large.partition_point(|j| j.time <= start_time);
        let mut jp = sc.jumps.partition_point(|j| j.time <= start_time);
        let mut cur = start_time;
        let mut state = x.to_vec();
        let mut next = vec![0.0; d];
        let mut dw = vec![0.0; m];
        let mut jump = vec![0.0; d];
        let mut ws = self.workspace();
        let level_gap = |p_level: u32| sc.level - p_level;

        while cell < end_cell {
            let cell_end = grid(cell + 1);
            let inc = sc.increment(cell);

            if let Control::Feedback(p) = control {
                let slot = cell >> level_gap(p.level);
                if path.decisions[slot].is_none() {
                    path.decisions[slot] = Some(p.action_index(slot, &state));
                }
            }
            let control_value = |path: &CadlagPath, t: f64| -> Vec<f64> {
                match control {
                    Control::None => Vec::new(),
                    Control::Step(s) => s.value_from(t).to_vec(),
                    Control::Feedback(p) => {
                        let slot = cell >> level_gap(p.level);
                        p.actions.actions[path.decisions[slot].expect("decided above")].clone()
                    }
                }
            };

            while lp < large.len() && large[lp].cell == cell {
                let j = large[lp];
                let a = control_value(&path, cur);
                set_last_control(&mut path, &a);
                for (w, (o, c)) in dw.iter_mut().zip(j.offset.iter().zip(&w_cur)) {
                    *w = o - c;
                }
                let jq = jp + sc.jumps[jp..].partition_point(|e| e.time <= j.time);
                self.step_into(cur, j.time - cur, &state, &dw, &sc.jumps[jp..jq], &a, &mut ws, &mut next);
                check_finite(j.time, &next)?;
                let pre = next.clone();
                self.coeffs.large_jump(&pre, j.time, j.mark, &a, &mut jump);
                for ((s, p), f) in state.iter_mut().zip(&pre).zip(&jump) {
                    *s = p + f;
                }
                check_finite(j.time, &state)?;
                self.clamp(&mut state, &mut path.meta);
                push(&mut path, j.time, &state, Some(pre));
                cur = j.time;
                w_cur.copy_from_slice(j.offset);
                lp += 1;
                jp = jq;
            }
            if cur < cell_end {
                let a = control_value(&path, cur);
                set_last_control(&mut path, &a);
                for (w, (i, c)) in dw.iter_mut().zip(inc.iter().zip(&w_cur)) {
                    *w = i - c;
                }
                let jq = jp + sc.jumps[jp..].partition_point(|e| e.time <= cell_end);
                self.step_into(cur, cell_end - cur, &state, &dw, &sc.jumps[jp..jq], &a, &mut ws, &mut next);
                check_finite(cell_end, &next)?;
                std::mem::swap(&mut state, &mut next);
                self.clamp(&mut state, &mut path.meta);
                push(&mut path, cell_end, &state, None);
                jp = jq;
            }
            cur = cell_end;
            w_cur.iter_mut().for_each(|v| *v = 0.0);
            cell += 1;
        }
        Ok(path)
    }

    fn clamp(&self, state: &mut [f64], meta: &mut PathMeta) {
        if let Some(b) = &self.options.clamp {
            if b.clamp(state) {
                meta.clamp_events += 1;
            }
        }
    }

    /// `X^{s,x}_t` for every combination on one scenario.
    pub fn evaluate_flow_field(
        &self,
        s_list: &[f64],
        x_list: &[Vec<f64>],
        t_list: &[f64],
        control: &Control,
        scenario: &LevyNoiseScenario,
    ) -> Result<FlowField> {
        if s_list.is_empty() || x_list.is_empty() || t_list.is_empty() {
            return Err(Error::argument("flow field lists must be nonempty"));
        }
        let d = self.coeffs.dims().state;
        let blocks: Vec<Vec<f64>> = s_list
            .par_iter()
            .map(|&s| {
                let mut block = Vec::with_capacity(x_list.len() * t_list.len() * d);
                for x in x_list {
                    let path = self.integrate(s, x, control, scenario)?;
                    for &t in t_list {
                        block.extend_from_slice(path.value_at(t));
                    }
                }
                Ok(block)
            })
            .collect::<Result<_>>()?;
        Ok(FlowField {
            dim: d,
            s_list: s_list.to_vec(),
            x_list: x_list.to_vec(),
            t_list: t_list.to_vec(),
            path_index: scenario.path_index,
            data: blocks.concat(),
        })
    }
}

fn set_last_control(path: &mut CadlagPath, a: &[f64]) {
    let l = path.control_dim;
    let n = path.controls.len();
    path.controls[n - l..].copy_from_slice(a);
}

fn check_finite(t: f64, state: &[f64]) -> Result<()> {
    if state.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Integration { time: t, detail: format!("non-finite state {state:?}") })
    }
}

/// Fixed sample of small marks: antithetic pairs for symmetric laws so that
/// odd jump maps have an exactly zero compensator.
fn compensator_sample(noise: &NoiseSetup, seed: u64) -> Vec<Vec<f64>> {
    let spec = &noise.measure;
    if spec.small_intensity == 0.0 {
        return Vec::new();
    }
    let mut rng = substream(seed, StreamTag::Compensator, 0);
    let dim = spec.mark_dim;
    if spec.small_marks.is_symmetric() {
        (0..COMPENSATOR_POINTS / 2)
            .flat_map(|_| {
                let z = spec.small_marks.sample(dim, Region::Small, &mut rng);
                let neg = z.iter().map(|v| -v).collect();
                [z, neg]
            })
            .collect()
    } else {
        (0..COMPENSATOR_POINTS).map(|_| spec.small_marks.sample(dim, Region::Small, &mut rng)).collect()
    }
}
