//! Command-line experiment harness: validate configs, run seeded
//! experiments into CSV reports, and aggregate report files.

mod config;
mod experiments;
mod summary;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::apply_overrides;
use experiments::{parse_report, run_experiment};
use std::fs;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "tracerecon", about = "Deletion-channel reconstruction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Check a config without running anything.
    Validate(ConfigArgs),
    /// Aggregate one or more report files into a summary table.
    Summarize(SummarizeArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Path to the TOML experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Replace the config's seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Set a config field, e.g. --override t=1000 or --override channel.retention=[0.9,0.8].
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Report destination; overrides the config's `out` field.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Report files produced by `run`, all of one experiment kind.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Write the table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load_config(args: &ConfigArgs, out: Option<&str>) -> Result<config::ExperimentConfig> {
    let text = fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))?;
    apply_overrides(&text, &args.overrides, args.seed, out)
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => {
            let out_flag = args.out.as_ref().map(|p| p.to_string_lossy().into_owned());
            let cfg = load_config(&args.config, out_flag.as_deref())?;
            if let Some(threads) = args.threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .context("configuring worker threads")?;
            }
            let report = run_experiment(&cfg)?;
            let path = cfg
                .out
                .clone()
                .ok_or_else(|| anyhow!("out: required (set it in the config or pass --out)"))?;
            fs::write(&path, &report).with_context(|| format!("writing {path}"))?;
            let rows = parse_report(&report)?.rows.len();
            println!("wrote {path} ({rows} data rows)");
        }
        Command::Validate(args) => {
            let cfg = load_config(&args, None)?;
            cfg.validate()?;
            println!("ok config={}", cfg.stable_hash());
        }
        Command::Summarize(args) => {
            let reports = args
                .reports
                .iter()
                .map(|p| {
                    let text = fs::read_to_string(p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    parse_report(&text)
                })
                .collect::<Result<Vec<_>>>()?;
            let table = summary::summarize(&reports)?;
            match args.out {
                Some(path) => fs::write(&path, &table)
                    .with_context(|| format!("writing {}", path.display()))?,
                None => print!("{table}"),
            }
        }
    }
    Ok(())
}
