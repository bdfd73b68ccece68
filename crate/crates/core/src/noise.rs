//! Frozen realizations of the driving noise.
//!
//! A scenario holds the Brownian increments of one path on a dyadic grid and
//! the marked Poisson points of the small-jump region `0 < |z| <= 1` and the
//! large-jump region `|z| > 1`. Large-jump times are kept exact; for each of
//! them the scenario also stores a Brownian-bridge sample of `W` at the jump
//! time so that the integrator can split the enclosing cell there.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, StreamTag};

/// Largest supported grid level; `2^30` cells per path is far beyond desk scale.
pub const MAX_LEVEL: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Small,
    Large,
}

impl Region {
    pub fn contains(self, mark: &[f64]) -> bool {
        let norm = euclid(mark);
        match self {
            Region::Small => norm > 0.0 && norm <= 1.0,
            Region::Large => norm > 1.0,
        }
    }
}

/// Named mark laws. Radial laws draw a uniform direction on the sphere.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MarkDistribution {
    /// Point mass.
    Fixed { mark: Vec<f64> },
    /// `+mark` or `-mark` with probability one half each.
    SymmetricPoint { mark: Vec<f64> },
    /// Uniform on the ball of the given radius (small region only).
    UniformBall { radius: f64 },
    /// Radius uniform on `(inner, outer]`, direction uniform.
    UniformShell { inner: f64, outer: f64 },
    /// Radius `1 + Exp(rate)`, direction uniform (large region only).
    RadialExponential { rate: f64 },
}

impl MarkDistribution {
    /// Whether `z` and `-z` have the same law.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, MarkDistribution::Fixed { .. })
    }

    fn validate(&self, dim: usize, region: Region) -> Result<()> {
        let bad = |msg: String| Err(Error::config(format!("{region:?} mark law: {msg}")));
        match self {
            MarkDistribution::Fixed { mark } | MarkDistribution::SymmetricPoint { mark } => {
                if mark.len() != dim {
                    return bad(format!("mark has length {}, expected {dim}", mark.len()));
                }
                if !region.contains(mark) {
                    return bad(format!("|mark| = {} outside the region", euclid(mark)));
                }
            }
            MarkDistribution::UniformBall { radius } => {
                if region == Region::Large {
                    return bad("uniform-ball is only valid for small marks".into());
                }
                if !(*radius > 0.0 && *radius <= 1.0) {
                    return bad(format!("radius {radius} not in (0, 1]"));
                }
            }
            MarkDistribution::UniformShell { inner, outer } => {
                if !(inner.is_finite() && outer.is_finite() && *inner >= 0.0 && outer > inner) {
                    return bad(format!("shell ({inner}, {outer}] is empty or invalid"));
                }
                match region {
                    Region::Small if *outer > 1.0 => return bad("shell leaves the unit ball".into()),
                    Region::Large if *inner < 1.0 => return bad("shell meets the unit ball".into()),
                    _ => {}
                }
            }
            MarkDistribution::RadialExponential { rate } => {
                if region == Region::Small {
                    return bad("radial-exponential is only valid for large marks".into());
                }
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad(format!("rate {rate} must be positive"));
                }
            }
        }
        Ok(())
    }

    fn sample_raw(&self, dim: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
        match self {
            MarkDistribution::Fixed { mark } => mark.clone(),
            MarkDistribution::SymmetricPoint { mark } => {
                if rng.random::<bool>() {
                    mark.clone()
                } else {
                    mark.iter().map(|v| -v).collect()
                }
            }
            MarkDistribution::UniformBall { radius } => {
                let u: f64 = rng.random();
                let r = radius * u.powf(1.0 / dim as f64);
                scaled_direction(dim, r, rng)
            }
            MarkDistribution::UniformShell { inner, outer } => {
                let u: f64 = rng.random();
                // (inner, outer]: u in [0, 1) maps to outer - u (outer - inner)
                let r = outer - u * (outer - inner);
                scaled_direction(dim, r, rng)
            }
            MarkDistribution::RadialExponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                scaled_direction(dim, 1.0 + e / rate, rng)
            }
        }
    }

    /// Draws one mark, rejecting the (null) draws that fall outside `region`.
    pub fn sample(&self, dim: usize, region: Region, rng: &mut ChaCha12Rng) -> Vec<f64> {
        loop {
            let z = self.sample_raw(dim, rng);
            if region.contains(&z) {
                return z;
            }
        }
    }
}

fn scaled_direction(dim: usize, radius: f64, rng: &mut ChaCha12Rng) -> Vec<f64> {
    if dim == 1 {
        return vec![if rng.random::<bool>() { radius } else { -radius }];
    }
    loop {
        let g: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = euclid(&g);
        if n > 0.0 {
            return g.into_iter().map(|v| v / n * radius).collect();
        }
    }
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Finite Lévy measure split into the small region `U0` and its complement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevyMeasureSpec {
    pub small_intensity: f64,
    pub small_marks: MarkDistribution,
    pub large_intensity: f64,
    pub large_marks: MarkDistribution,
    pub mark_dim: usize,
}

impl LevyMeasureSpec {
    pub fn validate(&self) -> Result<()> {
        if self.mark_dim == 0 {
            return Err(Error::config("mark_dim must be positive"));
        }
        if !(self.small_intensity >= 0.0 && self.small_intensity.is_finite()) {
            return Err(Error::config(format!(
                "small_intensity must be finite and >= 0, got {}",
                self.small_intensity
            )));
        }
        if !(self.large_intensity > 0.0 && self.large_intensity.is_finite()) {
            return Err(Error::config(format!("large_intensity must be finite and > 0, got {}", self.large_intensity)));
        }
        self.small_marks.validate(self.mark_dim, Region::Small)?;
        self.large_marks.validate(self.mark_dim, Region::Large)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
    pub region: Region,
}

/// One frozen noise realization, shared by every `(s, x, control)` evaluated on it.
#[derive(Clone, Debug, PartialEq)]
pub struct LevyNoiseScenario {
    pub horizon: f64,
    /// Grid level `m`: the step is `horizon / 2^m`.
    pub level: u32,
    pub brownian_dim: usize,
    /// `cells * brownian_dim` values, cell-major; each cell is `N(0, dt I)`.
    pub brownian_increments: Vec<f64>,
    /// Strictly increasing in time.
    pub jumps: Vec<JumpEvent>,
    /// For the i-th large jump (in time order), `W(tau) - W(t_k)` where `t_k`
    /// is the left end of the grid cell `(t_k, t_k+1]` holding the jump.
    pub bridge: Vec<f64>,
    pub seed: u64,
    pub path_index: u64,
}

impl LevyNoiseScenario {
    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    pub fn grid_step(&self) -> f64 {
        grid_step(self.horizon, self.level)
    }

    pub fn grid_time(&self, k: usize) -> f64 {
        k as f64 * self.grid_step()
    }

    pub fn increment(&self, cell: usize) -> &[f64] {
        let m = self.brownian_dim;
        &self.brownian_increments[cell * m..(cell + 1) * m]
    }

    /// Index `k` of the cell `(t_k, t_k+1]` containing `time > 0`.
    pub fn cell_of(&self, time: f64) -> usize {
        cell_of(time, self.grid_step(), self.cells())
    }

    pub fn large_jumps(&self) -> impl Iterator<Item = &JumpEvent> {
        self.jumps.iter().filter(|j| j.region == Region::Large)
    }

    pub fn small_jumps(&self) -> impl Iterator<Item = &JumpEvent> {
        self.jumps.iter().filter(|j| j.region == Region::Small)
    }

    /// Sum of all Brownian increments, `W(T)`.
    pub fn brownian_endpoint(&self) -> Vec<f64> {
        let m = self.brownian_dim;
        let mut w = vec![0.0; m];
        for cell in self.brownian_increments.chunks_exact(m) {
            for (acc, v) in w.iter_mut().zip(cell) {
                *acc += v;
            }
        }
        w
    }

    /// The same noise on the grid of level `m - 1`: increments are summed
    /// pairwise and bridge offsets are re-anchored at the coarse cell start.
    pub fn coarsen(&self) -> Result<LevyNoiseScenario> {
        if self.level == 0 {
            return Err(Error::argument("cannot coarsen a level-0 scenario"));
        }
        let m = self.brownian_dim;
        let fine = &self.brownian_increments;
        let mut coarse = Vec::with_capacity(fine.len() / 2);
        for k in 0..self.cells() / 2 {
            for i in 0..m {
                coarse.push(fine[2 * k * m + i] + fine[(2 * k + 1) * m + i]);
            }
        }
        let mut bridge = Vec::with_capacity(self.bridge.len());
        for (j, event) in self.large_jumps().enumerate() {
            let cell = self.cell_of(event.time);
            let offset = &self.bridge[j * m..(j + 1) * m];
            if cell % 2 == 1 {
                let first = self.increment(cell - 1);
                bridge.extend(first.iter().zip(offset).map(|(a, b)| a + b));
            } else {
                bridge.extend_from_slice(offset);
            }
        }
        Ok(LevyNoiseScenario { level: self.level - 1, brownian_increments: coarse, bridge, ..self.clone() })
    }

    /// The same realization with every large-region event removed.
    pub fn without_large_jumps(&self) -> LevyNoiseScenario {
        LevyNoiseScenario { jumps: self.small_jumps().cloned().collect(), bridge: Vec::new(), ..self.clone() }
    }

    pub fn record(&self) -> ScenarioRecord {
        ScenarioRecord {
            seed: self.seed,
            path_index: self.path_index,
            m: self.level,
            jumps: self
                .jumps
                .iter()
                .map(|j| JumpRecord { t: j.time, mark: j.mark.clone(), region: j.region })
                .collect(),
        }
    }
}

/// Debug dump of a scenario; Brownian increments are omitted since they are
/// regenerable from `(seed, path_index)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioRecord {
    pub seed: u64,
    pub path_index: u64,
    pub m: u32,
    pub jumps: Vec<JumpRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JumpRecord {
    pub t: f64,
    pub mark: Vec<f64>,
    pub region: Region,
}

pub fn grid_step(horizon: f64, level: u32) -> f64 {
    horizon / (1u64 << level) as f64
}

pub(crate) fn cell_of(time: f64, dt: f64, cells: usize) -> usize {
    let mut k = ((time / dt).ceil() as usize).clamp(1, cells) - 1;
    while k > 0 && time <= k as f64 * dt {
        k -= 1;
    }
    while k + 1 < cells && time > (k + 1) as f64 * dt {
        k += 1;
    }
    k
}

/// Grid level `m` with `grid_step == horizon / 2^m`, or a configuration error.
pub fn dyadic_level(horizon: f64, grid_step: f64) -> Result<u32> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::config(format!("horizon must be positive, got {horizon}")));
    }
    if !(grid_step > 0.0 && grid_step <= horizon) {
        return Err(Error::config(format!("grid_step {grid_step} not in (0, horizon]")));
    }
    let ratio = horizon / grid_step;
    let level = ratio.log2().round();
    if level < 0.0 || level > MAX_LEVEL as f64 || (2f64.powf(level) - ratio).abs() > 1e-9 * ratio {
        return Err(Error::config(format!("grid_step {grid_step} is not horizon / 2^m for horizon {horizon}")));
    }
    Ok(level as u32)
}

/// Everything needed to regenerate scenarios: the measure, the time grid and
/// the Brownian dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSetup {
    pub measure: LevyMeasureSpec,
    pub horizon: f64,
    pub level: u32,
    pub brownian_dim: usize,
}

impl NoiseSetup {
    pub fn new(measure: LevyMeasureSpec, horizon: f64, grid_step: f64, brownian_dim: usize) -> Result<Self> {
        measure.validate()?;
        let level = dyadic_level(horizon, grid_step)?;
        if brownian_dim == 0 {
            return Err(Error::config("brownian_dim must be positive"));
        }
        Ok(NoiseSetup { measure, horizon, level, brownian_dim })
    }

    pub fn grid_step(&self) -> f64 {
        grid_step(self.horizon, self.level)
    }

    pub fn cells(&self) -> usize {
        1usize << self.level
    }

    pub fn with_level(&self, level: u32) -> NoiseSetup {
        NoiseSetup { level, ..self.clone() }
    }

    pub fn scenario(&self, seed: u64, path_index: u64) -> LevyNoiseScenario {
        generate(&self.measure, self.horizon, self.level, self.brownian_dim, seed, path_index)
    }
}

/// Builds the scenario for `(seed, path_index)`.
pub fn build_scenario(
    spec: &LevyMeasureSpec,
    horizon: f64,
    grid_step: f64,
    brownian_dim: usize,
    seed: u64,
    path_index: u64,
) -> Result<LevyNoiseScenario> {
    let setup = NoiseSetup::new(spec.clone(), horizon, grid_step, brownian_dim)?;
    Ok(setup.scenario(seed, path_index))
}

/// Times of the large-region events, strictly increasing.
pub fn large_jump_times(scenario: &LevyNoiseScenario) -> Vec<f64> {
    scenario.large_jumps().map(|j| j.time).collect()
}

fn poisson_times(rate: f64, horizon: f64, rng: &mut ChaCha12Rng, forbidden: &[f64]) -> Vec<f64> {
    let mut times = Vec::new();
    if rate == 0.0 {
        return times;
    }
    let mut t = 0.0f64;
    loop {
        let e: f64 = Exp1.sample(rng);
        let candidate = t + e / rate;
        if candidate > horizon {
            return times;
        }
        // null events: tie with the previous point, a point at exactly T, or
        // a collision with the other stream
        if candidate == t || candidate == horizon || forbidden.binary_search_by(|p| p.total_cmp(&candidate)).is_ok() {
            continue;
        }
        times.push(candidate);
        t = candidate;
    }
}

fn generate(
    spec: &LevyMeasureSpec,
    horizon: f64,
    level: u32,
    brownian_dim: usize,
    seed: u64,
    path_index: u64,
) -> LevyNoiseScenario {
    let cells = 1usize << level;
    let dt = grid_step(horizon, level);
    let sqrt_dt = dt.sqrt();

    let mut rng = substream(seed, StreamTag::Brownian, path_index);
    let brownian_increments: Vec<f64> = (0..cells * brownian_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * sqrt_dt
        })
        .collect();

    let mut rng = substream(seed, StreamTag::LargeJumps, path_index);
    let large_times = poisson_times(spec.large_intensity, horizon, &mut rng, &[]);
    let mut rng = substream(seed, StreamTag::SmallJumps, path_index);
    let small_times = poisson_times(spec.small_intensity, horizon, &mut rng, &large_times);

    let mut rng = substream(seed, StreamTag::LargeMarks, path_index);
    let large: Vec<JumpEvent> = large_times
        .iter()
        .map(|&time| JumpEvent {
            time,
            mark: spec.large_marks.sample(spec.mark_dim, Region::Large, &mut rng),
            region: Region::Large,
        })
        .collect();
    let mut rng = substream(seed, StreamTag::SmallMarks, path_index);
    let small: Vec<JumpEvent> = small_times
        .iter()
        .map(|&time| JumpEvent {
            time,
            mark: spec.small_marks.sample(spec.mark_dim, Region::Small, &mut rng),
            region: Region::Small,
        })
        .collect();

    let mut jumps = Vec::with_capacity(large.len() + small.len());
    let (mut i, mut j) = (0, 0);
    while i < large.len() || j < small.len() {
        let take_large = j >= small.len() || (i < large.len() && large[i].time < small[j].time);
        if take_large {
            jumps.push(large[i].clone());
            i += 1;
        } else {
            jumps.push(small[j].clone());
            j += 1;
        }
    }

    // Brownian bridge of W at each large-jump time, conditional on the cell
    // increment and on the previous bridge point in the same cell.
    let mut rng = substream(seed, StreamTag::Bridge, path_index);
    let m = brownian_dim;
    let mut bridge = Vec::with_capacity(large.len() * m);
    let mut prev_cell = usize::MAX;
    let mut prev_time = 0.0;
    let mut prev_w = vec![0.0; m];
    for event in &large {
        let k = cell_of(event.time, dt, cells);
        let (left, right) = (k as f64 * dt, (k + 1) as f64 * dt);
        if k != prev_cell {
            prev_cell = k;
            prev_time = left;
            prev_w.iter_mut().for_each(|v| *v = 0.0);
        }
        let inc = &brownian_increments[k * m..(k + 1) * m];
        let point: Vec<f64> = if event.time >= right {
            inc.to_vec()
        } else {
            let span = right - prev_time;
            let frac = (event.time - prev_time) / span;
            let sd = ((event.time - prev_time) * (right - event.time) / span).sqrt();
            (0..m)
                .map(|i| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    prev_w[i] + frac * (inc[i] - prev_w[i]) + sd * z
                })
                .collect()
        };
        prev_time = event.time;
        prev_w.copy_from_slice(&point);
        bridge.extend_from_slice(&point);
    }

    LevyNoiseScenario { horizon, level, brownian_dim, brownian_increments, jumps, bridge, seed, path_index }
}
