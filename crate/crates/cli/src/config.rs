//! Experiment configuration: a sectioned TOML file (grammar in `CONFIG.md`).

use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use jumpflow::control::{ActionSet, Control, CostSpec, StateGrid, StepControl, StoppingTimeSpec, ValueGridConfig};
use jumpflow::model::{CatalogParams, StateBox};
use jumpflow::regularity::{CadlagConfig, ContinuityConfig, FlowCheckConfig, LipschitzConfig};
use jumpflow::rng::derive_seed;
use jumpflow::{
    CatalogModel, Coefficients, Integrator, IntegratorOptions, LevyMeasureSpec, MarkDistribution, NoiseSetup,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub control: Option<ControlSection>,
    #[serde(default)]
    pub run: RunSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub catalog_id: String,
    #[serde(default)]
    pub params: CatalogParams,
    /// Clamp the state into `[-clamp, clamp]^d` after every node.
    #[serde(default)]
    pub clamp: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "one")]
    pub horizon: f64,
    /// Simulation grid level `m`: `dt = T / 2^m`.
    pub level: u32,
    pub seed: u64,
    #[serde(default)]
    pub small_intensity: f64,
    #[serde(default = "default_small_marks")]
    pub small_marks: MarkDistribution,
    pub large_intensity: f64,
    #[serde(default = "default_large_marks")]
    pub large_marks: MarkDistribution,
}

fn one() -> f64 {
    1.0
}

fn default_small_marks() -> MarkDistribution {
    MarkDistribution::UniformBall { radius: 1.0 }
}

fn default_large_marks() -> MarkDistribution {
    MarkDistribution::UniformShell { inner: 1.0, outer: 2.0 }
}

/// Value-function grid: decision level `n` and the rectangular state grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub level: u32,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    pub actions: Vec<Vec<f64>>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default = "zero_cost")]
    pub running_cost: CostSpec,
    #[serde(default = "zero_cost")]
    pub terminal_cost: CostSpec,
    /// Open-loop control used by `simulate`, `flow-check` and `regularity`.
    #[serde(default)]
    pub policy: Option<PolicySpec>,
}

fn zero_cost() -> CostSpec {
    CostSpec::Zero
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Constant action `actions[index]`.
    Constant { index: usize },
    /// Piecewise-constant action indices on arbitrary cuts `0 = c_0 < ... < c_n = T`.
    Step { cuts: Vec<f64>, indices: Vec<usize> },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Output directory; not part of the config hash.
    #[serde(default, skip_serializing)]
    pub out: Option<String>,
    #[serde(default)]
    pub simulate: Option<SimulateRun>,
    #[serde(default)]
    pub flow_check: Option<FlowCheckRun>,
    #[serde(default)]
    pub regularity: Option<RegularityRun>,
    #[serde(default)]
    pub solve: Option<SolveRun>,
    #[serde(default)]
    pub dpp: Option<DppRun>,
    #[serde(default)]
    pub probe: Option<ProbeRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateRun {
    pub scenarios: usize,
    #[serde(default)]
    pub s: f64,
    pub x: Vec<Vec<f64>>,
    /// Scenarios (from index 0) whose paths are dumped as CSV.
    #[serde(default = "ten")]
    pub dump_paths: usize,
    /// Also dump the flow field of scenario 0 over these start times (grid times).
    #[serde(default)]
    pub flow_field_s: Option<Vec<f64>>,
}

fn ten() -> usize {
    10
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowCheckRun {
    /// `[s, u, t]` triples of grid times.
    pub times: Vec<[f64; 3]>,
    pub x: Vec<Vec<f64>>,
    pub scenarios: usize,
    #[serde(default)]
    pub perturbation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularityRun {
    #[serde(default)]
    pub lipschitz: Vec<LipschitzRun>,
    #[serde(default)]
    pub continuity: Option<ContinuityRun>,
    #[serde(default)]
    pub cadlag: Option<CadlagRun>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzRun {
    #[serde(default)]
    pub s: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: f64,
    pub scenarios: usize,
    #[serde(default = "three")]
    pub margin: f64,
    #[serde(default)]
    pub allow_large_jumps: bool,
}

fn three() -> f64 {
    3.0
}

fn five() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityRun {
    pub s: f64,
    pub radius: f64,
    #[serde(default = "five")]
    pub lattice_points: usize,
    pub epsilon: f64,
    pub offsets: Vec<f64>,
    pub scenarios: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CadlagRun {
    pub radius: f64,
    #[serde(default = "five")]
    pub lattice_points: usize,
    pub q: f64,
    pub triples: usize,
    pub scenarios: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveRun {
    pub inner_scenarios: usize,
    /// Lower-semicontinuity spot checks at `(s, x)` targets.
    #[serde(default)]
    pub lsc: Vec<LscTarget>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LscTarget {
    pub s: f64,
    pub x: Vec<f64>,
    #[serde(default = "twenty")]
    pub approaches: usize,
}

fn twenty() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppRun {
    pub scenarios: usize,
    pub cases: Vec<DppCase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DppCase {
    pub s: f64,
    pub x: Vec<f64>,
    pub theta: StoppingTimeSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeRun {
    pub samples: usize,
    pub state_lower: Vec<f64>,
    pub state_upper: Vec<f64>,
    #[serde(default)]
    pub action_lower: Option<Vec<f64>>,
    #[serde(default)]
    pub action_upper: Option<Vec<f64>>,
}

/// Stream salts for the sub-experiments of one run.
pub mod salt {
    pub const COMPENSATOR: u64 = 1;
    pub const SIMULATE: u64 = 2;
    pub const FLOW: u64 = 3;
    pub const LIPSCHITZ: u64 = 4;
    pub const CONTINUITY: u64 = 5;
    pub const CADLAG: u64 = 6;
    pub const SOLVE: u64 = 7;
    pub const DPP: u64 = 8;
    pub const PROBE: u64 = 9;
    pub const LSC: u64 = 10;
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).context("parsing config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        let dims = model.dims();
        self.noise_setup(dims.mark, dims.brownian)?;
        if let Some(g) = &self.grid {
            if g.level > self.noise.level {
                bail!("grid.level {} exceeds noise.level {}", g.level, self.noise.level);
            }
            let grid = StateGrid::new(g.lower.clone(), g.upper.clone(), g.counts.clone())?;
            if grid.dim() != dims.state {
                bail!("grid has dimension {}, the model state has {}", grid.dim(), dims.state);
            }
        }
        if let Some(c) = &self.control {
            let actions = self.actions()?.expect("control section present");
            if actions.dim() != dims.control {
                bail!("actions have dimension {}, the model control has {}", actions.dim(), dims.control);
            }
            c.running_cost.validate(dims.state)?;
            c.terminal_cost.validate(dims.state)?;
            self.control()?;
        } else if dims.control > 0 {
            bail!("model `{}` takes a control; add a [control] section", self.model.catalog_id);
        }
        if (self.run.solve.is_some() || self.run.dpp.is_some()) && (self.grid.is_none() || self.control.is_none()) {
            bail!("solve and dpp runs need [grid] and [control] sections");
        }
        Ok(())
    }

    /// Canonical JSON of the parsed config (defaults filled, output dir dropped).
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&value).expect("json value serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn model(&self) -> Result<CatalogModel> {
        Ok(CatalogModel::from_catalog(&self.model.catalog_id, &self.model.params)?)
    }

    pub fn noise_setup(&self, mark_dim: usize, brownian_dim: usize) -> Result<NoiseSetup> {
        let n = &self.noise;
        let measure = LevyMeasureSpec {
            small_intensity: n.small_intensity,
            small_marks: n.small_marks.clone(),
            large_intensity: n.large_intensity,
            large_marks: n.large_marks.clone(),
            mark_dim,
        };
        if n.level > 30 {
            bail!("noise.level must be at most 30");
        }
        let step = n.horizon / (1u64 << n.level) as f64;
        Ok(NoiseSetup::new(measure, n.horizon, step, brownian_dim)?)
    }

    pub fn integrator(&self) -> Result<Integrator> {
        let model = self.model()?;
        let dims = model.dims();
        let noise = self.noise_setup(dims.mark, dims.brownian)?;
        let options = IntegratorOptions { clamp: self.model.clamp.map(|r| StateBox::symmetric(dims.state, r)) };
        let coeffs: Arc<dyn Coefficients> = Arc::new(model);
        Ok(Integrator::new(coeffs, noise, self.seed(salt::COMPENSATOR), options)?)
    }

    pub fn seed(&self, salt: u64) -> u64 {
        derive_seed(self.noise.seed, salt)
    }

    pub fn actions(&self) -> Result<Option<ActionSet>> {
        let Some(c) = &self.control else { return Ok(None) };
        let set = match &c.labels {
            Some(l) => ActionSet::with_labels(c.actions.clone(), l.clone())?,
            None => ActionSet::new(c.actions.clone())?,
        };
        Ok(Some(set))
    }

    /// Open-loop control for path simulation and regularity checks.
    pub fn control(&self) -> Result<Control> {
        let horizon = self.noise.horizon;
        let Some(c) = &self.control else { return Ok(Control::None) };
        let actions = self.actions()?.expect("control section present");
        let pick = |i: usize| -> Result<Vec<f64>> {
            actions.actions.get(i).cloned().with_context(|| format!("action index {i} out of range"))
        };
        Ok(match &c.policy {
            None => Control::constant(pick(0)?, horizon),
            Some(PolicySpec::Constant { index }) => Control::constant(pick(*index)?, horizon),
            Some(PolicySpec::Step { cuts, indices }) => {
                let values = indices.iter().map(|i| pick(*i)).collect::<Result<Vec<_>>>()?;
                if cuts.last() != Some(&horizon) {
                    bail!("policy cuts must end at the horizon {horizon}");
                }
                Control::Step(StepControl::new(cuts.clone(), values)?)
            }
        })
    }

    pub fn value_grid_config(&self, inner_scenarios: usize) -> Result<ValueGridConfig> {
        let g = self.grid.as_ref().context("missing [grid] section")?;
        Ok(ValueGridConfig {
            level: g.level,
            grid: StateGrid::new(g.lower.clone(), g.upper.clone(), g.counts.clone())?,
            inner_scenarios,
            seed: self.seed(salt::SOLVE),
        })
    }

    pub fn flow_configs(&self, run: &FlowCheckRun) -> Vec<FlowCheckConfig> {
        run.times
            .iter()
            .enumerate()
            .map(|(i, [s, u, t])| FlowCheckConfig {
                s: *s,
                u: *u,
                t: *t,
                x_list: run.x.clone(),
                scenarios: run.scenarios,
                seed: derive_seed(self.seed(salt::FLOW), i as u64),
                perturbation: run.perturbation,
            })
            .collect()
    }

    pub fn lipschitz_config(&self, run: &LipschitzRun, index: usize) -> LipschitzConfig {
        LipschitzConfig {
            s: run.s,
            x: run.x.clone(),
            y: run.y.clone(),
            p: run.p,
            scenarios: run.scenarios,
            seed: derive_seed(self.seed(salt::LIPSCHITZ), index as u64),
            margin: run.margin,
            allow_large_jumps: run.allow_large_jumps,
        }
    }

    pub fn continuity_config(&self, run: &ContinuityRun) -> ContinuityConfig {
        ContinuityConfig {
            s: run.s,
            radius: run.radius,
            lattice_points: run.lattice_points,
            epsilon: run.epsilon,
            offsets: run.offsets.clone(),
            scenarios: run.scenarios,
            seed: self.seed(salt::CONTINUITY),
        }
    }

    pub fn cadlag_config(&self, run: &CadlagRun) -> CadlagConfig {
        CadlagConfig {
            radius: run.radius,
            lattice_points: run.lattice_points,
            q: run.q,
            triples: run.triples,
            scenarios: run.scenarios,
            seed: self.seed(salt::CADLAG),
        }
    }
}
