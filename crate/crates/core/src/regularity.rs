//! Statistical checks of the flow's defining properties.
//!
//! Every check runs its scenarios in parallel, collects the per-scenario
//! results in path-index order and reduces them sequentially, so a report
//! only depends on its configuration and seed.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::control::Control;
use crate::error::{Error, Result};
use crate::integrator::{snap_down, Integrator};
use crate::model::StateBox;
use crate::noise::LevyNoiseScenario;
use crate::path::{dist, CadlagPath};
use crate::rng::{substream, StreamTag};
use crate::stats::{ols, proportion, Estimate, Z99};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub test_name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
    pub sample_count: usize,
    /// Snapshot of the inputs.
    pub config: serde_json::Value,
    /// Test-specific intermediate results.
    pub details: serde_json::Value,
}

fn grid_index(t: f64, dt: f64, what: &str) -> Result<usize> {
    let (k, off) = snap_down(t, dt);
    if off {
        return Err(Error::argument(format!("{what} = {t} is not a grid time")));
    }
    Ok(k)
}

fn scenarios_par<T, F>(integrator: &Integrator, count: usize, seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&LevyNoiseScenario) -> Result<T> + Sync,
{
    (0..count as u64).into_par_iter().map(|i| f(&integrator.noise().scenario(seed, i))).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowCheckConfig {
    pub s: f64,
    pub u: f64,
    pub t: f64,
    pub x_list: Vec<Vec<f64>>,
    pub scenarios: usize,
    pub seed: u64,
    /// Added to every coordinate of the restart state; nonzero values turn
    /// the check into a negative control.
    #[serde(default)]
    pub perturbation: f64,
}

/// `max |X^{s,x}_r - X^{u, X^{s,x}_u}_r|` over scenarios, start states and
/// nodes `r` in `[u, t]`. The pass threshold is exact equality.
pub fn check_flow_property(
    integrator: &Integrator,
    control: &Control,
    cfg: &FlowCheckConfig,
) -> Result<RegularityReport> {
    let dt = integrator.noise().grid_step();
    grid_index(cfg.s, dt, "s")?;
    grid_index(cfg.u, dt, "u")?;
    grid_index(cfg.t, dt, "t")?;
    if !(cfg.s < cfg.u && cfg.u < cfg.t && cfg.t <= integrator.noise().horizon) {
        return Err(Error::argument("flow check needs s < u < t <= T"));
    }
    if cfg.x_list.is_empty() || cfg.scenarios == 0 {
        return Err(Error::argument("flow check needs start states and scenarios"));
    }
    let per_scenario = scenarios_par(integrator, cfg.scenarios, cfg.seed, |sc| {
        let mut worst = 0.0f64;
        for x in &cfg.x_list {
            let path = integrator.integrate_until(cfg.s, x, control, sc, cfg.t)?;
            let i = path.index_at(cfg.u);
            let restart_state: Vec<f64> = path.value(i).iter().map(|v| v + cfg.perturbation).collect();
            let restarted = integrator.restart_with_state(cfg.u, &restart_state, &path, control, sc)?;
            worst = worst.max(path.sup_distance(&restarted, cfg.u));
        }
        Ok(worst)
    })?;
    let statistic = per_scenario.iter().fold(0.0f64, |a, b| a.max(*b));
    Ok(RegularityReport {
        test_name: "flow_property".into(),
        statistic,
        threshold: 0.0,
        pass: statistic == 0.0,
        sample_count: cfg.scenarios * cfg.x_list.len(),
        config: serde_json::to_value(cfg)?,
        details: json!({ "perturbed": cfg.perturbation != 0.0 }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzConfig {
    pub s: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub p: f64,
    pub scenarios: usize,
    pub seed: u64,
    /// Allowed spread factor on top of `4^(p-1)`.
    #[serde(default = "default_margin")]
    pub margin: f64,
    /// Accept models with large jumps (the controlled extension).
    #[serde(default)]
    pub allow_large_jumps: bool,
}

fn default_margin() -> f64 {
    3.0
}

/// Moment ratios `E[sup_t |Y^{s,x}_t - Y^{s,y}_t|^p] / |x - y|^p` at the
/// separations `|x - y|`, `/2` and `/4` (the second point slides towards `x`).
pub fn estimate_lipschitz_moment(
    integrator: &Integrator,
    control: &Control,
    cfg: &LipschitzConfig,
) -> Result<RegularityReport> {
    if !(cfg.p >= 2.0) {
        return Err(Error::argument(format!("moment order p must be at least 2, got {}", cfg.p)));
    }
    if integrator.coefficients().has_large_jumps() && !cfg.allow_large_jumps {
        return Err(Error::argument(
            "the moment bound concerns the small-jump equation; remove large jumps or set allow_large_jumps",
        ));
    }
    let d = integrator.coefficients().dims().state;
    if cfg.x.len() != d || cfg.y.len() != d {
        return Err(Error::argument("x and y must have the state dimension"));
    }
    let h = dist(&cfg.x, &cfg.y);
    if !(h > 0.0) || cfg.scenarios == 0 {
        return Err(Error::argument("x and y must differ and scenarios must be positive"));
    }
    let ys: Vec<Vec<f64>> =
        [1.0, 0.5, 0.25].iter().map(|f| cfg.x.iter().zip(&cfg.y).map(|(a, b)| a + f * (b - a)).collect()).collect();
    let seps: Vec<f64> = ys.iter().map(|y| dist(&cfg.x, y)).collect();
    let samples = scenarios_par(integrator, cfg.scenarios, cfg.seed, |sc| {
        let px = integrator.integrate(cfg.s, &cfg.x, control, sc)?;
        ys.iter()
            .map(|y| {
                let py = integrator.integrate(cfg.s, y, control, sc)?;
                Ok(px.sup_distance(&py, cfg.s).powf(cfg.p))
            })
            .collect::<Result<Vec<f64>>>()
    })?;
    let mut ratios = Vec::with_capacity(3);
    let mut moments = Vec::with_capacity(3);
    for (k, sep) in seps.iter().enumerate() {
        let column: Vec<f64> = samples.iter().map(|s| s[k]).collect();
        let est = Estimate::from_samples(&column);
        ratios.push(est.mean / sep.powf(cfg.p));
        moments.push(est);
    }
    let max = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let min = ratios.iter().cloned().fold(f64::MAX, f64::min);
    let spread = if max == 0.0 { 1.0 } else { max / min };
    let allowed = 4f64.powf(cfg.p - 1.0) * cfg.margin;
    Ok(RegularityReport {
        test_name: "lipschitz_moment".into(),
        statistic: max,
        threshold: allowed,
        pass: spread <= allowed,
        sample_count: cfg.scenarios,
        config: serde_json::to_value(cfg)?,
        details: json!({
            "separations": seps,
            "ratios": ratios,
            "spread": spread,
            "moments": moments,
        }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuityConfig {
    pub s: f64,
    /// Half-width `M` of the start-state box.
    pub radius: f64,
    /// Lattice points per axis.
    #[serde(default = "default_lattice")]
    pub lattice_points: usize,
    pub epsilon: f64,
    pub offsets: Vec<f64>,
    pub scenarios: usize,
    pub seed: u64,
}

fn default_lattice() -> usize {
    5
}

/// Estimates `P(max_{x in lattice} sup_t |X^{r,x}_t - X^{s,x}_t| > eps)` for
/// `r = s + offset` and `r = s - offset` (whichever lie in `[0, T]`). Passes
/// iff along each side the estimates do not increase as the offset shrinks,
/// beyond a 99% interval. The statistic is the largest standardized increase.
pub fn estimate_stochastic_continuity(
    integrator: &Integrator,
    control: &Control,
    cfg: &ContinuityConfig,
) -> Result<RegularityReport> {
    let noise = integrator.noise();
    let dt = noise.grid_step();
    let horizon = noise.horizon;
    grid_index(cfg.s, dt, "s")?;
    if cfg.offsets.is_empty() || cfg.scenarios == 0 {
        return Err(Error::argument("continuity check needs offsets and scenarios"));
    }
    if let Some(o) = cfg.offsets.iter().find(|o| !(**o >= dt)) {
        return Err(Error::argument(format!("offset {o} is below the grid step {dt} and cannot be resolved")));
    }
    let mut offsets = cfg.offsets.clone();
    offsets.sort_by(|a, b| b.total_cmp(a));
    offsets.dedup();
    let d = integrator.coefficients().dims().state;
    let lattice = StateBox::symmetric(d, cfg.radius).lattice(cfg.lattice_points);

    // (side, offset, r) with r snapped down to the grid
    let mut probes: Vec<(i8, f64, f64)> = Vec::new();
    for side in [1i8, -1] {
        for &o in &offsets {
            let r = cfg.s + side as f64 * o;
            if (0.0..=horizon).contains(&r) {
                let (k, _) = snap_down(r, dt);
                probes.push((side, o, k as f64 * dt));
            }
        }
    }
    if probes.is_empty() {
        return Err(Error::argument("every offset leaves [0, T]"));
    }
    let hits = scenarios_par(integrator, cfg.scenarios, cfg.seed, |sc| {
        let base: Vec<CadlagPath> =
            lattice.iter().map(|x| integrator.integrate(cfg.s, x, control, sc)).collect::<Result<_>>()?;
        probes
            .iter()
            .map(|&(_, _, r)| {
                let mut sup = 0.0f64;
                for (x, b) in lattice.iter().zip(&base) {
                    let other = integrator.integrate(r, x, control, sc)?;
                    sup = sup.max(b.sup_distance(&other, 0.0));
                }
                Ok(sup > cfg.epsilon)
            })
            .collect::<Result<Vec<bool>>>()
    })?;
    let estimates: Vec<Estimate> =
        (0..probes.len()).map(|j| proportion(hits.iter().filter(|h| h[j]).count(), cfg.scenarios)).collect();

    let mut statistic = 0.0f64;
    for j in 1..probes.len() {
        if probes[j].0 != probes[j - 1].0 {
            continue;
        }
        let (wide, narrow) = (estimates[j - 1], estimates[j]);
        let rise = narrow.mean - wide.mean;
        let se = (wide.stderr.powi(2) + narrow.stderr.powi(2)).sqrt();
        let z = if rise <= 0.0 {
            0.0
        } else if se > 0.0 {
            rise / se
        } else {
            f64::INFINITY
        };
        statistic = statistic.max(z);
    }
    let rows: Vec<_> = probes
        .iter()
        .zip(&estimates)
        .map(|(&(side, offset, r), e)| {
            json!({ "side": side, "offset": offset, "r": r, "probability": e.mean, "stderr": e.stderr })
        })
        .collect();
    Ok(RegularityReport {
        test_name: "stochastic_continuity".into(),
        statistic,
        threshold: Z99,
        pass: statistic <= Z99,
        sample_count: cfg.scenarios,
        config: serde_json::to_value(cfg)?,
        details: json!({ "estimates": rows, "lattice_size": lattice.len() }),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CadlagConfig {
    /// Half-width of the start-state box.
    pub radius: f64,
    #[serde(default = "default_lattice")]
    pub lattice_points: usize,
    pub q: f64,
    pub triples: usize,
    pub scenarios: usize,
    pub seed: u64,
}

/// Fits the exponent of `E[D(s,u)^q D(u,v)^q] ~ (v - s)^slope` where
/// `D(s,u) = max_{x in lattice} sup_t |X^{s,x}_t - X^{u,x}_t|`, over random
/// grid triples `s < u < v` with `v - s` log-uniform in `[2 dt, T]`. Passes
/// iff `slope - 2 stderr > 1`.
pub fn estimate_cadlag_exponent(
    integrator: &Integrator,
    control: &Control,
    cfg: &CadlagConfig,
) -> Result<RegularityReport> {
    if !(cfg.q > 0.5) {
        return Err(Error::argument(format!("q must exceed 1/2, got {}", cfg.q)));
    }
    if cfg.triples == 0 || cfg.scenarios == 0 {
        return Err(Error::argument("cadlag check needs triples and scenarios"));
    }
    let noise = integrator.noise();
    let cells = noise.cells();
    if cells < 4 {
        return Err(Error::argument("grid too coarse for triples spanning more than two cells"));
    }
    let dt = noise.grid_step();
    let d = integrator.coefficients().dims().state;
    let lattice = StateBox::symmetric(d, cfg.radius).lattice(cfg.lattice_points);

    let mut rng = substream(cfg.seed, StreamTag::Triples, 0);
    let (lo, hi) = (2f64.ln(), (cells as f64).ln());
    let triples: Vec<(usize, usize, usize)> = (0..cfg.triples)
        .map(|_| {
            let span = (rng.random_range(lo..=hi).exp().round() as usize).clamp(2, cells);
            let s = rng.random_range(0..=cells - span);
            let u = rng.random_range(s + 1..s + span);
            (s, u, s + span)
        })
        .collect();
    let mut starts: Vec<usize> = triples.iter().flat_map(|&(s, u, v)| [s, u, v]).collect();
    starts.sort_unstable();
    starts.dedup();

    let products = scenarios_par(integrator, cfg.scenarios, cfg.seed, |sc| {
        // evaluation times: grid nodes and large-jump times
        let mut times: Vec<f64> = (0..=cells).map(|k| k as f64 * dt).collect();
        if integrator.coefficients().has_large_jumps() {
            times.extend(sc.large_jumps().map(|e| e.time));
            times.sort_by(f64::total_cmp);
            times.dedup();
        }
        let stride = lattice.len() * times.len() * d;
        let mut field = vec![0.0; starts.len() * stride];
        for (si, &k) in starts.iter().enumerate() {
            for (xi, x) in lattice.iter().enumerate() {
                let path = integrator.integrate(k as f64 * dt, x, control, sc)?;
                let base = si * stride + xi * times.len() * d;
                for (ti, &t) in times.iter().enumerate() {
                    field[base + ti * d..base + (ti + 1) * d].copy_from_slice(path.value_at(t));
                }
            }
        }
        let slot = |k: usize| starts.binary_search(&k).expect("start recorded");
        let gap = |a: usize, b: usize| -> f64 {
            let (pa, pb) = (slot(a) * stride, slot(b) * stride);
            let mut sup = 0.0f64;
            for c in 0..lattice.len() * times.len() {
                let off = c * d;
                sup = sup.max(dist(&field[pa + off..pa + off + d], &field[pb + off..pb + off + d]));
            }
            sup
        };
        Ok(triples.iter().map(|&(s, u, v)| (gap(s, u) * gap(u, v)).powf(cfg.q)).collect::<Vec<f64>>())
    })?;

    let n = cfg.scenarios as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (j, &(s, _, v)) in triples.iter().enumerate() {
        let moment = products.iter().map(|p| p[j]).sum::<f64>() / n;
        if moment > 0.0 {
            xs.push(((v - s) as f64 * dt).ln());
            ys.push(moment.ln());
        }
    }
    let sample_count = cfg.scenarios * cfg.triples;
    let config = serde_json::to_value(cfg)?;
    if xs.is_empty() {
        return Ok(RegularityReport {
            test_name: "cadlag_exponent".into(),
            statistic: f64::INFINITY,
            threshold: 1.0,
            pass: true,
            sample_count,
            config,
            details: json!({ "note": "deterministic-in-s family: every moment is zero" }),
        });
    }
    let fit = ols(&xs, &ys);
    let (statistic, details) = match fit {
        Some(f) => (
            f.slope - 2.0 * f.slope_stderr,
            json!({ "slope": f.slope, "slope_stderr": f.slope_stderr, "intercept": f.intercept, "points": f.points }),
        ),
        None => (f64::NAN, json!({ "note": "regression is degenerate", "points": xs.len() })),
    };
    Ok(RegularityReport {
        test_name: "cadlag_exponent".into(),
        statistic,
        threshold: 1.0,
        pass: statistic > 1.0,
        sample_count,
        config,
        details,
    })
}
