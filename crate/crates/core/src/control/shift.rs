use serde::{Deserialize, Serialize};

use super::StepControl;
use crate::error::{Error, Result};

/// Finest dyadic level accepted for shifted cut points.
const MAX_DYADIC_LEVEL: i32 = 30;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftedControl {
    pub control: StepControl,
    /// `sum_i (q_i - t_i) |a_i - a_{i-1}|^2`, the squared L2 distance to the original.
    pub distance: f64,
}

fn is_dyadic(q: f64, horizon: f64) -> bool {
    let r = q / horizon * 2f64.powi(MAX_DYADIC_LEVEL);
    r == r.round()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Moves the interior cut points `t_1 < ... < t_{n-1}` of `control` to the
/// dyadic times `q`, keeping the values. Requires `t_i <= q_i < t_{i+1}`.
pub fn dyadic_shift(control: &StepControl, q: &[f64]) -> Result<ShiftedControl> {
    let t = &control.cuts;
    let n = control.values.len();
    if q.len() + 1 != n {
        return Err(Error::argument(format!("expected {} shifted cut points, got {}", n - 1, q.len())));
    }
    let horizon = control.horizon();
    let mut distance = 0.0;
    for (k, &qi) in q.iter().enumerate() {
        let i = k + 1;
        if !(t[i] <= qi && qi < t[i + 1]) {
            return Err(Error::argument(format!(
                "q_{i} = {qi} must satisfy t_{i} = {} <= q_{i} < t_{} = {}",
                t[i],
                i + 1,
                t[i + 1]
            )));
        }
        if !is_dyadic(qi, horizon) {
            return Err(Error::argument(format!("q_{i} = {qi} is not a dyadic time")));
        }
        distance += (qi - t[i]) * sq_dist(&control.values[i], &control.values[i - 1]);
    }
    let mut cuts = Vec::with_capacity(n + 1);
    cuts.push(0.0);
    cuts.extend_from_slice(q);
    cuts.push(horizon);
    Ok(ShiftedControl { control: StepControl::new(cuts, control.values.clone())?, distance })
}

/// `q_i = ceil(t_i 2^k / T) T / 2^k`: the first level-`k` dyadic time at or
/// after each interior cut. Successive levels give nested refinements.
pub fn dyadic_refinement(control: &StepControl, level: u32) -> Result<Vec<f64>> {
    if level as i32 > MAX_DYADIC_LEVEL {
        return Err(Error::argument(format!("dyadic level {level} exceeds {MAX_DYADIC_LEVEL}")));
    }
    let horizon = control.horizon();
    let scale = 2f64.powi(level as i32);
    let t = &control.cuts;
    (1..t.len() - 1)
        .map(|i| {
            let q = (t[i] / horizon * scale).ceil() / scale * horizon;
            if q < t[i + 1] {
                Ok(q)
            } else {
                Err(Error::argument(format!("level {level} is too coarse to separate cut {i}")))
            }
        })
        .collect()
}

/// `int_0^T |a(t) - b(t)|^2 dt` for two step controls on the same horizon.
pub fn l2_distance(a: &StepControl, b: &StepControl) -> Result<f64> {
    if a.horizon() != b.horizon() || a.dim() != b.dim() {
        return Err(Error::argument("controls differ in horizon or dimension"));
    }
    let mut cuts: Vec<f64> = a.cuts.iter().chain(&b.cuts).copied().collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    Ok(cuts.windows(2).map(|w| (w[1] - w[0]) * sq_dist(a.value_from(w[0]), b.value_from(w[0]))).sum())
}
