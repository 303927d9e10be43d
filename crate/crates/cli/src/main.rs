use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use lmmse_clt_cli::commands::{cmd_fluct, cmd_simulate, cmd_solve};
use lmmse_clt_cli::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "lmmse-clt",
    version,
    about = "LMMSE SINR deterministic equivalents and fluctuations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the fixed-point system and write solve.json.
    Solve(Common),
    /// Compute the CLT variance and certificate and write fluct.json.
    Fluct(Common),
    /// Run the Monte Carlo experiment and write samples and summaries.
    Simulate(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to `out_dir` from the config, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<i64>,
    #[arg(long)]
    workers: Option<usize>,
}

impl Common {
    fn load(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.n_trials = t;
        }
        if let Some(w) = self.workers {
            cfg.workers = Some(w);
        }
        if let Some(o) = &self.out {
            cfg.out_dir = Some(o.clone());
        }
        cfg.validate()?;
        let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
        Ok((cfg, out))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve(c) => {
            let (cfg, out) = c.load()?;
            cmd_solve(&cfg, &out)?;
        }
        Command::Fluct(c) => {
            let (cfg, out) = c.load()?;
            cmd_fluct(&cfg, &out)?;
        }
        Command::Simulate(c) => {
            let (cfg, out) = c.load()?;
            cmd_simulate(&cfg, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
