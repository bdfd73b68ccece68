//! Step controls, the gain functional, backward induction for the value
//! function and dynamic-programming checks.

mod dpp;
mod gain;
mod grid;
mod shift;
mod value;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use dpp::{dpp_residual, lsc_spot_check, DppResidual, StoppingTimeSpec};
pub use gain::{enumerate_value, gain, CostSpec, EnumerationResult};
pub use grid::StateGrid;
pub use shift::{dyadic_refinement, dyadic_shift, l2_distance, ShiftedControl};
pub use value::{solve_value, ValueGrid, ValueGridConfig};

/// Finite action set in `R^l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionSet {
    pub actions: Vec<Vec<f64>>,
    pub labels: Vec<String>,
}

impl ActionSet {
    pub fn new(actions: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (0..actions.len()).map(|i| format!("a{i}")).collect();
        Self::with_labels(actions, labels)
    }

    pub fn with_labels(actions: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::config("action set must be nonempty"));
        }
        if labels.len() != actions.len() {
            return Err(Error::config("one label per action required"));
        }
        let dim = actions[0].len();
        if actions.iter().any(|a| a.len() != dim || a.iter().any(|v| !v.is_finite())) {
            return Err(Error::config("actions must be finite vectors of equal length"));
        }
        for i in 0..actions.len() {
            if actions[..i].contains(&actions[i]) {
                return Err(Error::config(format!("duplicate action {:?}", actions[i])));
            }
        }
        Ok(ActionSet { actions, labels })
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.actions[0].len()
    }
}

/// Open-loop control on the dyadic partition of level `n`: `indices[i]` is
/// the action on `(t_i, t_{i+1}]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimpleControl {
    pub level: u32,
    pub indices: Vec<usize>,
}

impl SimpleControl {
    pub fn new(level: u32, indices: Vec<usize>, actions: &ActionSet) -> Result<Self> {
        if indices.len() != 1usize << level {
            return Err(Error::argument(format!("level {level} needs {} values", 1usize << level)));
        }
        if let Some(i) = indices.iter().find(|&&i| i >= actions.len()) {
            return Err(Error::argument(format!("action index {i} out of range")));
        }
        Ok(SimpleControl { level, indices })
    }

    pub fn constant(level: u32, index: usize) -> Self {
        SimpleControl { level, indices: vec![index; 1usize << level] }
    }

    pub fn to_step(&self, actions: &ActionSet, horizon: f64) -> StepControl {
        let n = self.indices.len();
        let cuts = (0..=n).map(|i| horizon * i as f64 / n as f64).collect();
        let values = self.indices.iter().map(|&i| actions.actions[i].clone()).collect();
        StepControl { cuts, values }
    }
}

/// Piecewise-constant control with arbitrary cut points
/// `0 = cuts[0] < ... < cuts[n] = T`; `values[i]` holds on `(cuts[i], cuts[i+1]]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepControl {
    pub cuts: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl StepControl {
    pub fn new(cuts: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if cuts.len() < 2 || values.len() + 1 != cuts.len() {
            return Err(Error::argument("need n + 1 cut points for n values"));
        }
        if cuts[0] != 0.0 || cuts.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::argument("cut points must start at 0 and increase strictly"));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::argument("control values must share one dimension"));
        }
        Ok(StepControl { cuts, values })
    }

    pub fn constant(value: Vec<f64>, horizon: f64) -> Self {
        StepControl { cuts: vec![0.0, horizon], values: vec![value] }
    }

    pub fn horizon(&self) -> f64 {
        *self.cuts.last().unwrap()
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    /// Value used on an integration step starting at `time`: the piece with
    /// `cuts[i] <= time < cuts[i+1]`.
    pub fn value_from(&self, time: f64) -> &[f64] {
        let i = self.cuts.partition_point(|c| *c <= time).saturating_sub(1);
        &self.values[i.min(self.values.len() - 1)]
    }

    /// Value of the left-continuous step function at `time`.
    pub fn value_at(&self, time: f64) -> &[f64] {
        let i = self.cuts.partition_point(|c| *c < time).saturating_sub(1);
        &self.values[i.min(self.values.len() - 1)]
    }
}

/// Markov feedback on a dyadic time partition: the action for slot `i` is
/// looked up from the state at the start of the slot, at its nearest grid node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackPolicy {
    pub level: u32,
    pub grid: StateGrid,
    pub actions: ActionSet,
    /// `slots * grid.len()` action indices, slot-major.
    pub table: Vec<usize>,
}

impl FeedbackPolicy {
    pub fn slots(&self) -> usize {
        1usize << self.level
    }

    pub fn action_index(&self, slot: usize, x: &[f64]) -> usize {
        self.table[slot * self.grid.len() + self.grid.nearest(x)]
    }
}

/// Any control the integrator accepts.
#[derive(Clone, Debug, PartialEq)]
pub enum Control {
    None,
    Step(StepControl),
    Feedback(FeedbackPolicy),
}

impl Control {
    pub fn constant(value: Vec<f64>, horizon: f64) -> Self {
        Control::Step(StepControl::constant(value, horizon))
    }

    pub fn simple(control: &SimpleControl, actions: &ActionSet, horizon: f64) -> Self {
        Control::Step(control.to_step(actions, horizon))
    }

    pub fn dim(&self) -> usize {
        match self {
            Control::None => 0,
            Control::Step(s) => s.dim(),
            Control::Feedback(p) => p.actions.dim(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn action_set_rejects_duplicates_and_empty() {
        assert!(ActionSet::new(vec![]).is_err());
        assert!(ActionSet::new(vec![vec![1.0], vec![1.0]]).is_err());
        assert!(ActionSet::new(vec![vec![0.0], vec![1.0]]).is_ok());
    }

    #[test]
    fn step_lookup_conventions() {
        let c = StepControl::new(vec![0.0, 0.5, 1.0], vec![vec![0.0], vec![1.0]]).unwrap();
        assert_eq!(c.value_from(0.0), &[0.0]);
        assert_eq!(c.value_from(0.5), &[1.0]);
        assert_eq!(c.value_at(0.5), &[0.0]);
        assert_eq!(c.value_at(0.50001), &[1.0]);
        assert_eq!(c.value_from(1.0), &[1.0]);
    }

    #[test]
    fn simple_control_expands_to_dyadic_cuts() {
        let a = ActionSet::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let s = SimpleControl::new(2, vec![0, 1, 1, 0], &a).unwrap();
        let step = s.to_step(&a, 1.0);
        assert_eq!(step.cuts, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(step.value_from(0.3), &[1.0]);
        assert!(SimpleControl::new(2, vec![0, 1], &a).is_err());
        assert!(SimpleControl::new(1, vec![0, 2], &a).is_err());
    }
}
