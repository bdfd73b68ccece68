use anyhow::{bail, Context, Result};
use jumpflow::control::{dpp_residual, lsc_spot_check, solve_value, ValueGrid};
use jumpflow::model::{probe_hypotheses, ProbeDomain, StateBox};
use jumpflow::regularity::{
    check_flow_property, estimate_cadlag_exponent, estimate_lipschitz_moment, estimate_stochastic_continuity,
    RegularityReport,
};
use jumpflow::rng::derive_seed;
use jumpflow::Coefficients;
use rayon::prelude::*;
use serde_json::json;

use crate::artifacts::{OutputDir, SummaryRow};
use crate::config::{salt, ExperimentConfig};

pub struct Outcome {
    pub artifacts: Vec<String>,
    pub rows: Vec<SummaryRow>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { artifacts: Vec::new(), rows: Vec::new() }
    }

    fn add(&mut self, name: impl Into<String>) {
        self.artifacts.push(name.into());
    }

    fn report(&mut self, name: String, r: &RegularityReport) {
        self.rows.push(SummaryRow { name, statistic: r.statistic, threshold: r.threshold, pass: r.pass });
    }
}

fn csv_row(fields: impl IntoIterator<Item = String>) -> String {
    let mut line = fields.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

pub fn simulate(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let run = cfg.run.simulate.as_ref().context("missing [run.simulate] section")?;
    let it = cfg.integrator()?;
    let control = cfg.control()?;
    let seed = cfg.seed(salt::SIMULATE);
    let d = it.coefficients().dims().state;
    if run.x.iter().any(|x| x.len() != d) {
        bail!("run.simulate.x entries must have length {d}");
    }
    let per_scenario: Vec<(String, Vec<Vec<u8>>, Vec<String>)> = (0..run.scenarios as u64)
        .into_par_iter()
        .map(|p| {
            let sc = it.noise().scenario(seed, p);
            let record = serde_json::to_string(&sc.record())?;
            let mut csvs = Vec::new();
            let mut finals = Vec::new();
            for (xi, x) in run.x.iter().enumerate() {
                let path = it.integrate(run.s, x, &control, &sc)?;
                if (p as usize) < run.dump_paths {
                    let mut buf = Vec::new();
                    path.write_csv(&mut buf)?;
                    csvs.push(buf);
                }
                let mut fields = vec![p.to_string(), xi.to_string(), path.meta.clamp_events.to_string()];
                fields.extend(path.final_value().iter().map(f64::to_string));
                finals.push(csv_row(fields));
            }
            Ok((record, csvs, finals))
        })
        .collect::<Result<_>>()?;

    let mut outcome = Outcome::new();
    let mut records = String::new();
    let mut finals = csv_row(
        ["path_index".to_string(), "x_index".into(), "clamp_events".into()]
            .into_iter()
            .chain((0..d).map(|i| format!("state_{i}"))),
    );
    for (p, (record, csvs, rows)) in per_scenario.iter().enumerate() {
        records.push_str(record);
        records.push('\n');
        for (xi, buf) in csvs.iter().enumerate() {
            let name = format!("paths/path_{p:05}_{xi}.csv");
            out.write(&name, buf)?;
            outcome.add(name);
        }
        rows.iter().for_each(|r| finals.push_str(r));
    }
    out.write("scenarios.jsonl", records.as_bytes())?;
    outcome.add("scenarios.jsonl");
    out.write("finals.csv", finals.as_bytes())?;
    outcome.add("finals.csv");

    if let Some(s_list) = &run.flow_field_s {
        let t_list: Vec<f64> = (0..=it.noise().cells()).map(|k| k as f64 * it.noise().grid_step()).collect();
        let field = it.evaluate_flow_field(s_list, &run.x, &t_list, &control, &it.noise().scenario(seed, 0))?;
        let mut buf = Vec::new();
        field.write_csv(&mut buf)?;
        out.write("flow_field.csv", &buf)?;
        outcome.add("flow_field.csv");
    }
    Ok(outcome)
}

pub fn flow_check(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let run = cfg.run.flow_check.as_ref().context("missing [run.flow_check] section")?;
    let it = cfg.integrator()?;
    let control = cfg.control()?;
    let mut outcome = Outcome::new();
    let mut reports = Vec::new();
    for c in cfg.flow_configs(run) {
        let r = check_flow_property(&it, &control, &c)?;
        outcome.report(format!("flow_property s={} u={} t={}", c.s, c.u, c.t), &r);
        reports.push(r);
    }
    out.write_jsonl("reports.jsonl", &reports)?;
    outcome.add("reports.jsonl");
    Ok(outcome)
}

pub fn regularity(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let run = cfg.run.regularity.as_ref().context("missing [run.regularity] section")?;
    let it = cfg.integrator()?;
    let control = cfg.control()?;
    let mut outcome = Outcome::new();
    let mut reports = Vec::new();
    for (i, l) in run.lipschitz.iter().enumerate() {
        let r = estimate_lipschitz_moment(&it, &control, &cfg.lipschitz_config(l, i))?;
        // the table compares the ratio spread with its allowed factor
        let spread = r.details["spread"].as_f64().unwrap_or(f64::NAN);
        outcome.rows.push(SummaryRow {
            name: format!("lipschitz_spread p={}", l.p),
            statistic: spread,
            threshold: r.threshold,
            pass: r.pass,
        });
        reports.push(r);
    }
    if let Some(c) = &run.continuity {
        let r = estimate_stochastic_continuity(&it, &control, &cfg.continuity_config(c))?;
        outcome.report("stochastic_continuity".into(), &r);
        reports.push(r);
    }
    if let Some(c) = &run.cadlag {
        let r = estimate_cadlag_exponent(&it, &control, &cfg.cadlag_config(c))?;
        outcome.report("cadlag_exponent".into(), &r);
        reports.push(r);
    }
    if reports.is_empty() {
        bail!("[run.regularity] configures no check");
    }
    out.write_jsonl("reports.jsonl", &reports)?;
    outcome.add("reports.jsonl");
    Ok(outcome)
}

fn solve_grid(cfg: &ExperimentConfig) -> Result<ValueGrid> {
    let run = cfg.run.solve.as_ref().context("missing [run.solve] section")?;
    let it = cfg.integrator()?;
    let c = cfg.control.as_ref().context("missing [control] section")?;
    let actions = cfg.actions()?.context("missing [control] section")?;
    Ok(solve_value(&it, &c.running_cost, &c.terminal_cost, &actions, &cfg.value_grid_config(run.inner_scenarios)?)?)
}

fn write_value_grid(vg: &ValueGrid, out: &OutputDir, outcome: &mut Outcome) -> Result<()> {
    let mut buf = Vec::new();
    vg.write_csv(&mut buf)?;
    out.write("value_grid.csv", &buf)?;
    outcome.add("value_grid.csv");
    let max_abs = vg.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    outcome.rows.push(SummaryRow {
        name: "value_bound".into(),
        statistic: max_abs,
        threshold: vg.bound(),
        pass: max_abs <= vg.bound() * (1.0 + 1e-9) + 1e-12,
    });
    out.write_json(
        "solve.json",
        &json!({
            "level": vg.level,
            "slots": vg.slots(),
            "grid_points": vg.grid.len(),
            "inner_scenarios": vg.inner_scenarios,
            "clamp_count": vg.clamp_count,
            "max_abs_value": max_abs,
            "bound": vg.bound(),
        }),
    )?;
    outcome.add("solve.json");
    Ok(())
}

pub fn solve(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let vg = solve_grid(cfg)?;
    let mut outcome = Outcome::new();
    write_value_grid(&vg, out, &mut outcome)?;
    let run = cfg.run.solve.as_ref().expect("checked by solve_grid");
    let mut reports = Vec::new();
    for (i, target) in run.lsc.iter().enumerate() {
        let seed = derive_seed(cfg.seed(salt::LSC), i as u64);
        let r = lsc_spot_check(&vg, target.s, &target.x, target.approaches, seed, 0.0)?;
        outcome.report(format!("lsc s={} x={:?}", target.s, target.x), &r);
        reports.push(r);
    }
    if !reports.is_empty() {
        out.write_jsonl("reports.jsonl", &reports)?;
        outcome.add("reports.jsonl");
    }
    Ok(outcome)
}

pub fn dpp_check(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let run = cfg.run.dpp.as_ref().context("missing [run.dpp] section")?;
    let vg = solve_grid(cfg)?;
    let it = cfg.integrator()?;
    let mut outcome = Outcome::new();
    write_value_grid(&vg, out, &mut outcome)?;
    let mut records = Vec::new();
    for (i, case) in run.cases.iter().enumerate() {
        let seed = derive_seed(cfg.seed(salt::DPP), i as u64);
        let r = dpp_residual(&it, &vg, case.s, &case.x, &case.theta, run.scenarios, seed)?;
        outcome.rows.push(SummaryRow {
            name: format!("dpp #{i} s={} x={:?}", case.s, case.x),
            statistic: r.residual.abs(),
            threshold: jumpflow::stats::Z99 * r.stderr + r.allowance,
            pass: r.pass,
        });
        records.push(r);
    }
    out.write_jsonl("dpp.jsonl", &records)?;
    outcome.add("dpp.jsonl");
    Ok(outcome)
}

pub fn probe(cfg: &ExperimentConfig, out: &OutputDir) -> Result<Outcome> {
    let run = cfg.run.probe.as_ref().context("missing [run.probe] section")?;
    let model = cfg.model()?;
    let action_box = match (&run.action_lower, &run.action_upper) {
        (Some(l), Some(u)) => Some(StateBox::new(l.clone(), u.clone())?),
        (None, None) => None,
        _ => bail!("give both action_lower and action_upper or neither"),
    };
    let domain = ProbeDomain {
        state_box: StateBox::new(run.state_lower.clone(), run.state_upper.clone())?,
        action_box,
        horizon: cfg.noise.horizon,
    };
    let report = probe_hypotheses(&model, &domain, run.samples, cfg.seed(salt::PROBE))?;
    let mut outcome = Outcome::new();
    let est = report.estimated_lipschitz_x.as_array();
    let declared = model.declared_lipschitz();
    outcome.rows.push(SummaryRow {
        name: format!("probe {}", model.catalog_id().name),
        statistic: est[..3].iter().cloned().fold(0.0, f64::max),
        threshold: declared.unwrap_or(f64::INFINITY),
        pass: report.within_declared(),
    });
    out.write_jsonl("probe.jsonl", &[&report])?;
    outcome.add("probe.jsonl");
    Ok(outcome)
}
