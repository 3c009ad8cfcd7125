use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use loopfair::io::{parse_experiment_config, run_stages, ExperimentConfig, PipelineOptions, SamplingMode, Stage};

/// Long-term fairness analysis of feedback-loop decision systems.
#[derive(Parser)]
#[command(name = "loopfair", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write every configuration of the space.
    Enumerate(Common),
    /// Write a covering-array sample of the space.
    Sample {
        #[command(flatten)]
        common: Common,
        /// Strength, overriding the config file.
        #[arg(long)]
        strength: Option<usize>,
    },
    /// Write configurations and run the Monte-Carlo campaign.
    Simulate(Common),
    /// Sensitivity analysis of an existing campaign.
    Analyze(Common),
    /// Pareto front of an existing campaign.
    Pareto(Common),
    /// All stages.
    Run(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Global seed, overriding the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, overriding the config file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(&self.config)
            .with_context(|| format!("reading {}", self.config.display()))?;
        let mut cfg = parse_experiment_config(&text)
            .with_context(|| format!("invalid experiment file {}", self.config.display()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.output_dir = out.to_string_lossy().into_owned();
        }
        Ok(cfg)
    }
}

/// Honours SOURCE_DATE_EPOCH so manifests can be made byte-reproducible.
fn options(jobs: usize) -> Result<PipelineOptions> {
    let fixed_time = match std::env::var("SOURCE_DATE_EPOCH") {
        Ok(s) => {
            let secs: i64 = s.trim().parse().context("SOURCE_DATE_EPOCH is not an integer")?;
            Some(chrono::DateTime::from_timestamp(secs, 0).context("SOURCE_DATE_EPOCH out of range")?)
        }
        Err(_) => None,
    };
    Ok(PipelineOptions { jobs, fixed_time })
}

fn run(cli: Cli) -> Result<()> {
    let (common, stages): (&Common, &[Stage]) = match &cli.command {
        Command::Enumerate(c) => (c, &[Stage::Configs]),
        Command::Sample { common, .. } => (common, &[Stage::Configs]),
        Command::Simulate(c) => (c, &[Stage::Configs, Stage::Simulate]),
        Command::Analyze(c) => (c, &[Stage::Analyze]),
        Command::Pareto(c) => (c, &[Stage::Pareto]),
        Command::Run(c) => (c, &Stage::ALL),
    };
    let mut cfg = common.load()?;
    match &cli.command {
        Command::Enumerate(_) => {
            cfg.sampling.mode = SamplingMode::Full;
            cfg.sampling.strength = None;
        }
        Command::Sample { strength, .. } => {
            cfg.sampling.mode = SamplingMode::Covering;
            cfg.sampling.strength = strength.or(cfg.sampling.strength);
            if cfg.sampling.strength.is_none() {
                bail!("sample needs a strength: pass --strength or set sampling.strength");
            }
        }
        _ => {}
    }
    let manifest = run_stages(&cfg, stages, &options(common.jobs)?)?;
    for s in &manifest.stages {
        match &s.note {
            Some(n) => println!("{}: {:?} ({n})", s.name, s.status),
            None => println!("{}: {:?}", s.name, s.status),
        }
    }
    println!("output: {}", cfg.output_dir);
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
