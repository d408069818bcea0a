use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use irsopt::experiment::checks::run_checks;
use irsopt::experiment::{
    load_experiment, load_scenario, run_deploy, run_physical, run_schedule, run_sweep, run_train_deploy,
    ExperimentOutcome, ExperimentSpec, Recipe, RunOptions, SeedSpec,
};

#[derive(Parser)]
#[command(name = "irsopt", version, about = "Zeroth-order tuning of reflecting surfaces with an inexact WMMSE oracle")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fixed-budget sweep with a random-surface baseline.
    Sweep(RunArgs),
    /// Decreasing-budget schedules.
    Schedule(RunArgs),
    /// Train with a large budget, checkpoint, then deploy with small budgets.
    Train(RunArgs),
    /// Evaluate existing checkpoints.
    Deploy(RunArgs),
    /// Fixed-budget sweep on the varactor surface.
    Physical(RunArgs),
    /// Run the invariant and diagnostic suite.
    Check {
        /// Scenario file; a small built-in scenario is used when absent.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Experiment file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the experiment file).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed count or comma-separated list of seed indices.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads (0 = one per CPU).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Also write an SVG chart.
    #[arg(long)]
    svg: bool,
}

fn prepare(args: &RunArgs, expected: &[Recipe]) -> Result<(ExperimentSpec, RunOptions)> {
    let mut spec = load_experiment(&args.config).with_context(|| format!("loading {}", args.config.display()))?;
    if !expected.contains(&spec.file.recipe) {
        bail!(
            "{} declares recipe {:?}, which this subcommand does not run",
            args.config.display(),
            spec.file.recipe
        );
    }
    if let Some(seeds) = &args.seeds {
        spec.set_seeds(SeedSpec::parse(seeds)?)?;
    }
    if let Some(out) = &args.out {
        spec.set_output_dir(out);
    }
    log::info!("scenario:\n{}", spec.scenario.echo());
    Ok((
        spec,
        RunOptions {
            workers: args.workers,
            svg: args.svg,
        },
    ))
}

fn report(outcome: &ExperimentOutcome) -> bool {
    let s = &outcome.summary;
    for c in &s.curves {
        println!("{:<28} final-window mean {:>8.4} ± {:.4} ({} runs)", c.label, c.final_window_mean, c.final_window_std, c.runs);
    }
    for c in &s.baselines {
        println!("{:<28} final-window mean {:>8.4} ± {:.4}", c.label, c.final_window_mean, c.final_window_std);
    }
    for r in &s.deploy {
        println!(
            "deploy budget {:<3} trained {:>8.4} ± {:.4}  random {:>8.4} ± {:.4}",
            r.budget, r.trained.mean, r.trained.std, r.random.mean, r.random.std
        );
    }
    for f in &s.failures {
        eprintln!("failed: {f}");
    }
    println!("wrote {} files", outcome.files.len());
    s.all_ok
}

fn run(cli: Cli) -> Result<bool> {
    let outcome = match &cli.command {
        Command::Sweep(a) => {
            let (spec, opts) = prepare(a, &[Recipe::Sweep])?;
            run_sweep(&spec, &opts)?
        }
        Command::Schedule(a) => {
            let (spec, opts) = prepare(a, &[Recipe::Schedule])?;
            run_schedule(&spec, &opts)?
        }
        Command::Train(a) => {
            let (spec, opts) = prepare(a, &[Recipe::TrainDeploy])?;
            run_train_deploy(&spec, &opts)?
        }
        Command::Deploy(a) => {
            let (spec, opts) = prepare(a, &[Recipe::TrainDeploy])?;
            run_deploy(&spec, &opts)?
        }
        Command::Physical(a) => {
            let (spec, opts) = prepare(a, &[Recipe::Physical])?;
            run_physical(&spec, &opts)?
        }
        Command::Check { config } => {
            let scenario = config
                .as_ref()
                .map(|p| load_scenario(p).with_context(|| format!("loading {}", p.display())))
                .transpose()?;
            let checks = run_checks(scenario.as_ref());
            for c in &checks {
                println!("[{}] {}: {}", if c.passed { "pass" } else { "FAIL" }, c.name, c.detail);
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
    };
    Ok(report(&outcome))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
