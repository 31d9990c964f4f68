use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rcmdp::config::{validate_with, Overrides, Preset};
use rcmdp::pipeline::{report, Pipeline};
use rcmdp::trainers::Algorithm;
use rcmdp::{Error, Result};

/// Robust constrained policy-gradient experiment runner.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated training seeds.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Scale preset: desk or paper.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Comma-separated algorithm tags.
    #[arg(long, global = true, value_delimiter = ',')]
    algorithms: Option<Vec<Algorithm>>,
    /// Worker threads for training and testing.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Verb {
    /// Phase 1: collect random-policy data and estimate the uncertainty set.
    Estimate,
    /// Phases 1-2: estimate (or reuse) and train every algorithm and seed.
    Train,
    /// Phase 3: test trained checkpoints on the perturbed dynamics.
    Test,
    /// All three phases.
    Run,
    /// Recompute summary.csv and charts from results.csv.
    Report,
}

fn open(cli: &Cli) -> Result<Pipeline> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config(vec!["--config is required".into()]))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    let overrides = Overrides {
        preset: cli.preset,
        seeds: cli.seeds.clone(),
        algorithms: cli.algorithms.clone(),
        out: cli.out.clone(),
        jobs: cli.jobs,
    };
    let validated = validate_with(&text, &overrides)?;
    Pipeline::open(validated.config)
}

fn execute(cli: &Cli) -> Result<()> {
    match cli.verb {
        Verb::Estimate => {
            let (set, hit) = open(cli)?.estimate()?;
            let (lo, hi) = set.observed_budget_range().unwrap_or((f64::NAN, f64::NAN));
            println!("alpha over visited pairs: [{lo:.3}, {hi:.3}]{}", if hit { " (cached)" } else { "" });
        }
        Verb::Train => {
            let mut p = open(cli)?;
            let (set, _) = p.estimate()?;
            let trained = p.train(&set)?;
            println!("trained {} runs", trained.len());
        }
        Verb::Test => print_summary(&open(cli)?.test()?),
        Verb::Run => print_summary(&open(cli)?.run()?),
        Verb::Report => {
            let out = cli
                .out
                .clone()
                .ok_or_else(|| Error::Config(vec!["report needs --out".into()]))?;
            print_summary(&report(&out)?);
        }
    }
    Ok(())
}

fn print_summary(rows: &[rcmdp::eval::SummaryRow]) {
    println!("{:<16} {:<5} {:>12} {:>10} {:>12}", "algorithm", "test", "value", "overshoot", "R_pen");
    for r in rows.iter().filter(|r| r.param_value == "all") {
        println!(
            "{:<16} {:<5} {:>12.2} {:>10.2} {:>12.2}",
            r.algorithm.as_str(),
            r.test_id,
            r.value_mean,
            r.overshoot_mean,
            r.penalised_mean
        );
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
