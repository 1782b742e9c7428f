//! Command-line driver for asynchronous Prox-DGD / DGD-ATC experiments.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use asyncdgd_core::asynchrony::Schedule;
use clap::{Parser, Subcommand};

use crate::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "asyncdgd", version, about = "Asynchronous decentralized proximal gradient experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one configuration and write its trace and reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Accept step sizes above the convergence bound (outputs are marked).
        #[arg(long)]
        override_stepsize: bool,
        /// Output directory (defaults to output.dir of the config).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replaces the problem, graph, schedule and start seeds.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Merge F(x_bar) - F* curves of several configs sharing one problem.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        override_stepsize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Delay histogram and epoch analytics of a schedule file or of a config's schedule.
    Delays {
        #[arg(long, conflicts_with = "config", required_unless_present = "config")]
        schedule: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        bucket: u64,
        #[arg(long)]
        override_stepsize: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.reseed(s);
    }
    Ok(cfg)
}

fn label_of(path: &Path, cfg: &ExperimentConfig) -> String {
    cfg.output.label.clone().unwrap_or_else(|| {
        path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned())
    })
}

fn run(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Run { config, override_stepsize, out, seed } => {
            let cfg = load(&config, seed)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.clone());
            commands::cmd_run(&cfg, override_stepsize, &out)
        }
        Command::Compare { config, override_stepsize, out, seed } => {
            let mut configs = Vec::new();
            for path in &config {
                let cfg = load(path, seed)?;
                configs.push((label_of(path, &cfg), cfg));
            }
            let mut labels: Vec<&String> = configs.iter().map(|(l, _)| l).collect();
            labels.sort();
            labels.dedup();
            if labels.len() != configs.len() {
                bail!("compare: curve labels must be distinct (set output.label)");
            }
            let out = out.unwrap_or_else(|| configs[0].1.output.dir.clone());
            commands::cmd_compare(&configs, override_stepsize, &out)
        }
        Command::Delays { schedule, config, bucket, override_stepsize, out, seed } => {
            let (sched, mark, default_out) = match (schedule, config) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    let mark = text
                        .lines()
                        .find_map(|l| l.strip_prefix("# ").filter(|r| r.starts_with("stepsize_override=true")))
                        .map(str::to_string);
                    let dir = path.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
                    (Schedule::parse(&text)?, mark, dir)
                }
                (None, Some(path)) => {
                    let cfg = load(&path, seed)?;
                    let (s, mark) = commands::schedule_of(&cfg, override_stepsize)?;
                    (s, mark, cfg.output.dir.clone())
                }
                (None, None) => unreachable!("clap requires one input"),
            };
            commands::cmd_delays(&sched, bucket, &out.unwrap_or(default_out), mark.as_deref())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
