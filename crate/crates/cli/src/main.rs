//! Command-line harness for the sapda library.

mod experiment;
mod manifest;

use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use manifest::{ExperimentKind, ExperimentManifest};

#[derive(Parser)]
#[command(name = "sapda", version, about = "Self-adaptive partial domain adaptation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration across the seed list.
    Run(RunArgs),
    /// Train every mode variant on the same tasks.
    Ablate(RunArgs),
    /// Sweep the cluster loss weight over the betas list.
    SweepBeta(RunArgs),
    /// Sweep the number of target classes.
    SweepClasses(RunArgs),
    /// Run the built-in invariant checks; exits nonzero if any fail.
    Check {
        /// Seed for the randomised checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Overrides applied on top of defaults, config file and `SAPDA_*`
/// environment variables, in that order.
#[derive(Args)]
struct RunArgs {
    /// Config file with `key = value` lines; every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replace the seed list with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory root.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Total training iterations.
    #[arg(long)]
    iters: Option<usize>,
    /// Iterations between weight updates.
    #[arg(long)]
    interval: Option<usize>,
    /// Cluster loss weight.
    #[arg(long)]
    beta: Option<f64>,
    /// Training mode, as for the train.mode key.
    #[arg(long)]
    mode: Option<String>,
}

fn resolve(kind: ExperimentKind, args: &RunArgs) -> Result<ExperimentManifest> {
    let mut m = ExperimentManifest::default();
    if let Some(path) = &args.config {
        let body = fs::read_to_string(path)
            .with_context(|| format!("config file {} not found or unreadable", path.display()))?;
        m.apply_file(&body, &path.display().to_string())?;
    }
    m.apply_env()?;
    m.kind = kind;
    if let Some(seed) = args.seed {
        m.seeds = vec![seed];
    }
    if let Some(out) = &args.out {
        m.out = out.clone();
    }
    if let Some(iters) = args.iters {
        m.train.total_iterations = iters;
    }
    if let Some(interval) = args.interval {
        m.train.update_interval = interval;
    }
    if let Some(beta) = args.beta {
        m.train.beta = beta;
    }
    if let Some(mode) = &args.mode {
        m.apply("train.mode", mode)?;
    }
    Ok(m)
}

fn execute(kind: ExperimentKind, args: &RunArgs) -> Result<()> {
    let m = resolve(kind, args)?;
    let report = experiment::run(&m)?;
    println!("wrote {}", report.dir.display());
    for c in &report.conditions {
        println!(
            "{}: mean accuracy {:.4} (std {:.4}, n={})",
            c.name,
            c.mean_accuracy,
            c.std_accuracy,
            c.seeds.len()
        );
    }
    Ok(())
}

fn check(seed: u64) -> Result<()> {
    let results = sapda::verify::run_invariant_suite(seed);
    let mut failed = 0usize;
    for r in &results {
        let tag = if r.passed { "ok" } else { "FAIL" };
        println!("{tag} {}: {}", r.name, r.detail);
        if !r.passed {
            failed += 1;
        }
    }
    if failed > 0 {
        bail!("{failed} of {} checks failed", results.len());
    }
    println!("all {} checks passed", results.len());
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => execute(ExperimentKind::Single, &args),
        Command::Ablate(args) => execute(ExperimentKind::Ablation, &args),
        Command::SweepBeta(args) => execute(ExperimentKind::BetaSweep, &args),
        Command::SweepClasses(args) => execute(ExperimentKind::ClassSweep, &args),
        Command::Check { seed } => check(seed),
    }
}
