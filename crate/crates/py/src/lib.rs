//! Python bindings. Structured arguments (mark laws, costs, stopping times,
//! controls, catalog parameters) are plain dicts in the same shape as the
//! TOML config; reports come back as dicts.

use std::sync::Arc;

use ::jumpflow::control::{
    self, ActionSet, Control, CostSpec, StateGrid, StepControl, StoppingTimeSpec, ValueGridConfig,
};
use ::jumpflow::model::{CatalogParams, ProbeDomain, StateBox};
use ::jumpflow::regularity::{self, CadlagConfig, ContinuityConfig, FlowCheckConfig, LipschitzConfig};
use ::jumpflow::{
    CatalogModel, Coefficients, Integrator, IntegratorOptions, LevyMeasureSpec, MarkDistribution, NoiseSetup,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::de::DeserializeOwned;
use serde::Serialize;

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Converts a Python object to a serde type through its JSON text.
fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let json = obj.py().import("json")?;
    let text: String = json.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(err)
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn parse_control(obj: Option<&Bound<'_, PyAny>>, horizon: f64) -> PyResult<Control> {
    #[derive(serde::Deserialize)]
    #[serde(tag = "kind", rename_all = "kebab-case")]
    enum Spec {
        Constant { value: Vec<f64> },
        Step { cuts: Vec<f64>, values: Vec<Vec<f64>> },
    }
    let Some(obj) = obj.filter(|o| !o.is_none()) else { return Ok(Control::None) };
    Ok(match from_py::<Spec>(obj)? {
        Spec::Constant { value } => Control::constant(value, horizon),
        Spec::Step { cuts, values } => Control::Step(StepControl::new(cuts, values).map_err(err)?),
    })
}

/// Node times, states and jump flags of one path.
type PathArrays = (Vec<f64>, Vec<Vec<f64>>, Vec<bool>);

/// A catalog model, e.g. `Model("ornstein-uhlenbeck", {"theta": 1.0})`.
#[pyclass(frozen)]
struct Model {
    inner: CatalogModel,
}

#[pymethods]
impl Model {
    #[new]
    #[pyo3(signature = (catalog_id, params=None))]
    fn new(catalog_id: &str, params: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let table: CatalogParams = match params {
            Some(p) => from_py(p.as_any())?,
            None => CatalogParams::new(),
        };
        Ok(Model { inner: CatalogModel::from_catalog(catalog_id, &table).map_err(err)? })
    }

    /// `(state, brownian, mark, control)` dimensions.
    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.inner.dims();
        (d.state, d.brownian, d.mark, d.control)
    }

    #[getter]
    fn name(&self) -> &'static str {
        self.inner.name()
    }

    /// Monte Carlo probe of the Lipschitz and growth hypotheses on a box.
    #[pyo3(signature = (state_lower, state_upper, samples, seed, horizon=1.0, action_lower=None, action_upper=None))]
    #[allow(clippy::too_many_arguments)]
    fn probe<'py>(
        &self,
        py: Python<'py>,
        state_lower: Vec<f64>,
        state_upper: Vec<f64>,
        samples: usize,
        seed: u64,
        horizon: f64,
        action_lower: Option<Vec<f64>>,
        action_upper: Option<Vec<f64>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let action_box = match (action_lower, action_upper) {
            (Some(l), Some(u)) => Some(StateBox::new(l, u).map_err(err)?),
            (None, None) => None,
            _ => return Err(err("give both action bounds or neither")),
        };
        let domain =
            ProbeDomain { state_box: StateBox::new(state_lower, state_upper).map_err(err)?, action_box, horizon };
        let report = ::jumpflow::model::probe_hypotheses(&self.inner, &domain, samples, seed).map_err(err)?;
        to_py(py, &report)
    }
}

/// Shared noise description: Levy measure, horizon and dyadic grid.
#[pyclass(frozen)]
struct Noise {
    inner: NoiseSetup,
}

#[pymethods]
impl Noise {
    #[new]
    #[pyo3(signature = (level, large_intensity, small_intensity=0.0, mark_dim=1, brownian_dim=1, horizon=1.0, small_marks=None, large_marks=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        level: u32,
        large_intensity: f64,
        small_intensity: f64,
        mark_dim: usize,
        brownian_dim: usize,
        horizon: f64,
        small_marks: Option<&Bound<'_, PyAny>>,
        large_marks: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Self> {
        let small_marks = match small_marks {
            Some(m) => from_py(m)?,
            None => MarkDistribution::UniformBall { radius: 1.0 },
        };
        let large_marks = match large_marks {
            Some(m) => from_py(m)?,
            None => MarkDistribution::UniformShell { inner: 1.0, outer: 2.0 },
        };
        if level > 30 {
            return Err(err("level must be at most 30"));
        }
        let measure = LevyMeasureSpec { small_intensity, small_marks, large_intensity, large_marks, mark_dim };
        let step = horizon / (1u64 << level) as f64;
        Ok(Noise { inner: NoiseSetup::new(measure, horizon, step, brownian_dim).map_err(err)? })
    }

    #[getter]
    fn grid_step(&self) -> f64 {
        self.inner.grid_step()
    }

    /// The jump list and metadata of scenario `(seed, index)`.
    fn scenario<'py>(&self, py: Python<'py>, seed: u64, index: u64) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.scenario(seed, index).record())
    }
}

/// Jump-adapted Euler integrator for one model on one noise setup.
#[pyclass(frozen)]
struct Simulator {
    inner: Integrator,
}

#[pymethods]
impl Simulator {
    #[new]
    #[pyo3(signature = (model, noise, compensator_seed=1, clamp=None))]
    fn new(model: &Model, noise: &Noise, compensator_seed: u64, clamp: Option<f64>) -> PyResult<Self> {
        let dim = model.inner.dims().state;
        let options = IntegratorOptions { clamp: clamp.map(|r| StateBox::symmetric(dim, r)) };
        let coeffs: Arc<dyn Coefficients> = Arc::new(model.inner.clone());
        Ok(Simulator { inner: Integrator::new(coeffs, noise.inner.clone(), compensator_seed, options).map_err(err)? })
    }

    /// One path on scenario `(seed, index)`: `(node times, states, jump flags)`.
    #[pyo3(signature = (s, x, seed, index, control=None))]
    fn path(
        &self,
        s: f64,
        x: Vec<f64>,
        seed: u64,
        index: u64,
        control: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<PathArrays> {
        let control = parse_control(control, self.inner.noise().horizon)?;
        let sc = self.inner.noise().scenario(seed, index);
        let path = self.inner.integrate(s, &x, &control, &sc).map_err(err)?;
        let states = (0..path.len()).map(|i| path.value(i).to_vec()).collect();
        let jumps = (0..path.len()).map(|i| path.is_jump(i)).collect();
        Ok((path.nodes, states, jumps))
    }

    /// Terminal states of scenarios `0..count`, computed in parallel.
    #[pyo3(signature = (s, x, seed, count, control=None))]
    fn finals(
        &self,
        py: Python<'_>,
        s: f64,
        x: Vec<f64>,
        seed: u64,
        count: u64,
        control: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<Vec<Vec<f64>>> {
        use rayon::prelude::*;
        let control = parse_control(control, self.inner.noise().horizon)?;
        let it = &self.inner;
        py.detach(|| {
            (0..count)
                .into_par_iter()
                .map(|p| Ok(it.integrate(s, &x, &control, &it.noise().scenario(seed, p))?.final_value().to_vec()))
                .collect::<::jumpflow::Result<Vec<_>>>()
        })
        .map_err(err)
    }

    #[pyo3(signature = (s, u, t, x_list, scenarios, seed, control=None, perturbation=0.0))]
    #[allow(clippy::too_many_arguments)]
    fn flow_check<'py>(
        &self,
        py: Python<'py>,
        s: f64,
        u: f64,
        t: f64,
        x_list: Vec<Vec<f64>>,
        scenarios: usize,
        seed: u64,
        control: Option<&Bound<'py, PyAny>>,
        perturbation: f64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let control = parse_control(control, self.inner.noise().horizon)?;
        let cfg = FlowCheckConfig { s, u, t, x_list, scenarios, seed, perturbation };
        let r = py.detach(|| regularity::check_flow_property(&self.inner, &control, &cfg)).map_err(err)?;
        to_py(py, &r)
    }

    /// `config` holds the fields of the Lipschitz run table.
    #[pyo3(signature = (config, control=None))]
    fn lipschitz<'py>(
        &self,
        config: &Bound<'py, PyAny>,
        control: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg: LipschitzConfig = from_py(config)?;
        self.report(config.py(), control, |it, c| regularity::estimate_lipschitz_moment(it, c, &cfg))
    }

    #[pyo3(signature = (config, control=None))]
    fn continuity<'py>(
        &self,
        config: &Bound<'py, PyAny>,
        control: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg: ContinuityConfig = from_py(config)?;
        self.report(config.py(), control, |it, c| regularity::estimate_stochastic_continuity(it, c, &cfg))
    }

    #[pyo3(signature = (config, control=None))]
    fn cadlag<'py>(
        &self,
        config: &Bound<'py, PyAny>,
        control: Option<&Bound<'py, PyAny>>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let cfg: CadlagConfig = from_py(config)?;
        self.report(config.py(), control, |it, c| regularity::estimate_cadlag_exponent(it, c, &cfg))
    }

    /// Monte Carlo gain `(mean, stderr)` of an open-loop control.
    #[pyo3(signature = (s, x, running_cost, terminal_cost, scenarios, seed, control=None))]
    #[allow(clippy::too_many_arguments)]
    fn gain(
        &self,
        py: Python<'_>,
        s: f64,
        x: Vec<f64>,
        running_cost: &Bound<'_, PyAny>,
        terminal_cost: &Bound<'_, PyAny>,
        scenarios: usize,
        seed: u64,
        control: Option<&Bound<'_, PyAny>>,
    ) -> PyResult<(f64, f64)> {
        let h: CostSpec = from_py(running_cost)?;
        let j: CostSpec = from_py(terminal_cost)?;
        let control = parse_control(control, self.inner.noise().horizon)?;
        let e = py.detach(|| control::gain(&self.inner, s, &x, &control, &h, &j, scenarios, seed)).map_err(err)?;
        Ok((e.mean, e.stderr))
    }

    /// Best simple control by exhaustive search: `(value, stderr, action indices)`.
    #[allow(clippy::too_many_arguments)]
    fn enumerate_value(
        &self,
        py: Python<'_>,
        s: f64,
        x: Vec<f64>,
        running_cost: &Bound<'_, PyAny>,
        terminal_cost: &Bound<'_, PyAny>,
        actions: Vec<Vec<f64>>,
        level: u32,
        scenarios: usize,
        seed: u64,
    ) -> PyResult<(f64, f64, Vec<usize>)> {
        let h: CostSpec = from_py(running_cost)?;
        let j: CostSpec = from_py(terminal_cost)?;
        let actions = ActionSet::new(actions).map_err(err)?;
        let r = py
            .detach(|| control::enumerate_value(&self.inner, s, &x, &h, &j, &actions, level, scenarios, seed))
            .map_err(err)?;
        Ok((r.value.mean, r.value.stderr, r.best.indices))
    }

    /// Backward induction on a rectangular grid.
    #[allow(clippy::too_many_arguments)]
    fn solve_value(
        &self,
        py: Python<'_>,
        running_cost: &Bound<'_, PyAny>,
        terminal_cost: &Bound<'_, PyAny>,
        actions: Vec<Vec<f64>>,
        level: u32,
        lower: Vec<f64>,
        upper: Vec<f64>,
        counts: Vec<usize>,
        inner_scenarios: usize,
        seed: u64,
    ) -> PyResult<ValueGrid> {
        let h: CostSpec = from_py(running_cost)?;
        let j: CostSpec = from_py(terminal_cost)?;
        let actions = ActionSet::new(actions).map_err(err)?;
        let cfg =
            ValueGridConfig { level, grid: StateGrid::new(lower, upper, counts).map_err(err)?, inner_scenarios, seed };
        let vg = py.detach(|| control::solve_value(&self.inner, &h, &j, &actions, &cfg)).map_err(err)?;
        Ok(ValueGrid { inner: vg })
    }

    /// DPP residual record at `(s, x)` for the stopping time `theta`.
    #[allow(clippy::too_many_arguments)]
    fn dpp_residual<'py>(
        &self,
        py: Python<'py>,
        grid: &ValueGrid,
        s: f64,
        x: Vec<f64>,
        theta: &Bound<'py, PyAny>,
        scenarios: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let theta: StoppingTimeSpec = from_py(theta)?;
        let r = py
            .detach(|| control::dpp_residual(&self.inner, &grid.inner, s, &x, &theta, scenarios, seed))
            .map_err(err)?;
        to_py(py, &r)
    }
}

impl Simulator {
    fn report<'py, F>(&self, py: Python<'py>, control: Option<&Bound<'py, PyAny>>, f: F) -> PyResult<Bound<'py, PyAny>>
    where
        F: FnOnce(&Integrator, &Control) -> ::jumpflow::Result<regularity::RegularityReport> + Send,
    {
        let control = parse_control(control, self.inner.noise().horizon)?;
        let r = py.detach(|| f(&self.inner, &control)).map_err(err)?;
        to_py(py, &r)
    }
}

/// Solved value function on the decision grid.
#[pyclass(frozen)]
struct ValueGrid {
    inner: control::ValueGrid,
}

#[pymethods]
impl ValueGrid {
    #[getter]
    fn slots(&self) -> usize {
        self.inner.slots()
    }

    #[getter]
    fn points(&self) -> Vec<Vec<f64>> {
        self.inner.grid.points()
    }

    /// Values at decision slice `i`, one per grid point.
    fn slice(&self, i: usize) -> PyResult<Vec<f64>> {
        if i > self.inner.slots() {
            return Err(err("slice index out of range"));
        }
        Ok(self.inner.slice(i).to_vec())
    }

    /// Greedy action indices at decision slice `i < slots`.
    fn policy(&self, i: usize) -> PyResult<Vec<usize>> {
        let n = self.inner.grid.len();
        if i >= self.inner.slots() {
            return Err(err("slice index out of range"));
        }
        Ok(self.inner.policy[i * n..(i + 1) * n].to_vec())
    }

    /// Interpolated value at `(t, x)`.
    fn value_at(&self, t: f64, x: Vec<f64>) -> f64 {
        self.inner.value_at(t, &x)
    }

    #[getter]
    fn interpolation_allowance(&self) -> f64 {
        self.inner.interpolation_allowance()
    }

    fn lsc_spot_check<'py>(
        &self,
        py: Python<'py>,
        s: f64,
        x: Vec<f64>,
        approaches: usize,
        seed: u64,
    ) -> PyResult<Bound<'py, PyAny>> {
        let r = control::lsc_spot_check(&self.inner, s, &x, approaches, seed, 0.0).map_err(err)?;
        to_py(py, &r)
    }
}

/// Shift a step control onto dyadic cut points: `(cuts, values, distance)`.
#[pyfunction]
fn dyadic_shift(cuts: Vec<f64>, values: Vec<Vec<f64>>, targets: Vec<f64>) -> PyResult<(Vec<f64>, Vec<Vec<f64>>, f64)> {
    let c = StepControl::new(cuts, values).map_err(err)?;
    let shifted = control::dyadic_shift(&c, &targets).map_err(err)?;
    Ok((shifted.control.cuts.clone(), shifted.control.values.clone(), shifted.distance))
}

#[pymodule]
fn jumpflow(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", ::jumpflow::VERSION)?;
    m.add_class::<Model>()?;
    m.add_class::<Noise>()?;
    m.add_class::<Simulator>()?;
    m.add_class::<ValueGrid>()?;
    m.add_function(wrap_pyfunction!(dyadic_shift, m)?)?;
    Ok(())
}
