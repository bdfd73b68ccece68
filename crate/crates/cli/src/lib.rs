//! Command-line driver: parses an experiment config, runs one subcommand and
//! writes its artifacts plus a manifest into the output directory.
//!
//! Exit codes: 0 when every check passes, 1 when a check fails, 2 on
//! configuration or usage errors.

pub mod artifacts;
pub mod commands;
pub mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use artifacts::{print_summary, Manifest, OutputDir};
use config::ExperimentConfig;

/// Environment variable consulted for the output directory only.
pub const OUT_ENV: &str = "JUMPFLOW_OUT";

#[derive(Parser, Debug)]
#[command(
    name = "jumpflow",
    version,
    about = "Sharp stochastic flows of jump diffusions: simulation, checks and control"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(clap::Args, Debug, Clone)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override of `noise.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all cores. Never changes results.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Output directory (falls back to $JUMPFLOW_OUT, then `run.out`, then `jumpflow-out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    /// Simulate paths and dump scenarios, paths and an optional flow field.
    Simulate,
    /// Check the flow identity at grid times.
    FlowCheck,
    /// Lipschitz moments, stochastic continuity and the cadlag exponent.
    Regularity,
    /// Backward induction for the value function.
    Solve,
    /// Dynamic programming residuals against a solved value grid.
    DppCheck,
    /// Probe the Lipschitz and growth hypotheses of the model.
    Probe,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::FlowCheck => "flow-check",
            Command::Regularity => "regularity",
            Command::Solve => "solve",
            Command::DppCheck => "dpp-check",
            Command::Probe => "probe",
        }
    }
}

enum Failure {
    Config(anyhow::Error),
    Run(anyhow::Error),
}

/// Runs the CLI on `args` (program name first) and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Config(e)) => {
            let msg = format!("{e:#}");
            if msg.contains("configuration error") {
                eprintln!("{msg}");
            } else {
                eprintln!("configuration error: {msg}");
            }
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<jumpflow::Error>()
                .is_some_and(|j| matches!(j, jumpflow::Error::Config(_) | jumpflow::Error::Argument(_)))
            {
                2
            } else {
                1
            }
        }
    }
}

fn load(common: &CommonArgs) -> Result<ExperimentConfig> {
    let path = common.config.as_ref().ok_or_else(|| anyhow::anyhow!("--config <path> is required"))?;
    let mut cfg = ExperimentConfig::from_path(path)?;
    if let Some(seed) = common.seed {
        cfg.noise.seed = seed;
    }
    Ok(cfg)
}

fn require_section(cfg: &ExperimentConfig, command: Command) -> Result<()> {
    let run = &cfg.run;
    let (present, section) = match command {
        Command::Simulate => (run.simulate.is_some(), "run.simulate"),
        Command::FlowCheck => (run.flow_check.is_some(), "run.flow_check"),
        Command::Regularity => (run.regularity.is_some(), "run.regularity"),
        Command::Solve => (run.solve.is_some(), "run.solve"),
        Command::DppCheck => (run.dpp.is_some(), "run.dpp"),
        Command::Probe => (run.probe.is_some(), "run.probe"),
    };
    if !present {
        anyhow::bail!("`{}` needs a [{section}] section", command.name());
    }
    Ok(())
}

fn output_dir(common: &CommonArgs, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(p) = &common.out {
        return p.clone();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    PathBuf::from(cfg.run.out.clone().unwrap_or_else(|| "jumpflow-out".into()))
}

fn execute(cli: &Cli) -> std::result::Result<bool, Failure> {
    let cfg = load(&cli.common).map_err(Failure::Config)?;
    require_section(&cfg, cli.command).map_err(Failure::Config)?;
    let out = OutputDir::create(&output_dir(&cli.common, &cfg)).map_err(Failure::Config)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.common.threads)
        .build()
        .map_err(|e| Failure::Config(e.into()))?;
    let outcome = pool
        .install(|| match cli.command {
            Command::Simulate => commands::simulate(&cfg, &out),
            Command::FlowCheck => commands::flow_check(&cfg, &out),
            Command::Regularity => commands::regularity(&cfg, &out),
            Command::Solve => commands::solve(&cfg, &out),
            Command::DppCheck => commands::dpp_check(&cfg, &out),
            Command::Probe => commands::probe(&cfg, &out),
        })
        .map_err(Failure::Run)?;

    let manifest = Manifest {
        subcommand: cli.command.name(),
        config_hash: cfg.hash(),
        seed: cfg.noise.seed,
        jumpflow_version: jumpflow::VERSION,
        cli_version: env!("CARGO_PKG_VERSION"),
        artifacts: outcome.artifacts.clone(),
    };
    let timestamp =
        std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    out.write_json("manifest.json", &manifest).map_err(Failure::Run)?;
    out.write_json("run_info.json", &serde_json::json!({ "unix_time": timestamp, "threads": cli.common.threads }))
        .map_err(Failure::Run)?;

    print_summary(&outcome.rows);
    println!("artifacts written to {}", out.path().display());
    Ok(outcome.rows.iter().all(|r| r.pass))
}
