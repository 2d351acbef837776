use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nc_ood::harness::{
    generate_datasets, report, run_experiment, train_models, ExperimentConfig, ExperimentKind, RunOutcome,
};
use nc_ood::{Error, Result};

/// Neural collapse and OoD detection experiments on synthetic data.
#[derive(Parser)]
#[command(name = "nc-ood", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write each seed's datasets as feature dumps.
    Generate(RunArgs),
    /// Train without scoring: checkpoints, feature dumps, trajectories.
    Train(RunArgs),
    /// Train and score (train-eval, or baseline-compare when configured).
    Eval(RunArgs),
    /// L2 × spectral normalization × leaky activation grid.
    Ablate(RunArgs),
    /// Cross-entropy control against collapse-loss continuation.
    Intervene(RunArgs),
    /// Score one model at every checkpoint epoch.
    Sweep(RunArgs),
    /// Long-format tables from a manifest.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated seeds; overrides the configured list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct ReportArgs {
    /// Manifest file, or the directory holding `manifest.json`.
    manifest: PathBuf,
    /// Defaults to `<run directory>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn load(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if let Some(out) = &args.out {
        config.output_dir = out.clone();
    }
    if let Some(seeds) = &args.seeds {
        config.seeds = seeds.clone();
    }
    config.validate()?;
    Ok(config)
}

fn with_kind(mut config: ExperimentConfig, kind: ExperimentKind) -> Result<ExperimentConfig> {
    config.experiment_kind = kind;
    config.validate()?;
    Ok(config)
}

fn summarize(outcome: &RunOutcome) {
    let m = &outcome.manifest;
    println!("{}: {} artifacts", outcome.manifest_path.display(), m.artifacts.len());
    for f in &m.failures {
        eprintln!("failed: condition {} seed {}: {}", f.condition, f.seed, f.error);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => summarize(&generate_datasets(&load(&a)?)?),
        Command::Train(a) => summarize(&train_models(&load(&a)?, a.jobs)?),
        Command::Eval(a) => {
            let config = load(&a)?;
            let config = match config.experiment_kind {
                ExperimentKind::BaselineCompare => config,
                _ => with_kind(config, ExperimentKind::TrainEval)?,
            };
            summarize(&run_experiment(&config, a.jobs)?)
        }
        Command::Ablate(a) => summarize(&run_experiment(&with_kind(load(&a)?, ExperimentKind::AblationGrid)?, a.jobs)?),
        Command::Intervene(a) => summarize(&run_experiment(&with_kind(load(&a)?, ExperimentKind::Intervention)?, a.jobs)?),
        Command::Sweep(a) => summarize(&run_experiment(&with_kind(load(&a)?, ExperimentKind::OvertrainSweep)?, a.jobs)?),
        Command::Report(a) => {
            let manifest = if a.manifest.is_dir() {
                a.manifest.join(nc_ood::harness::MANIFEST_FILE)
            } else {
                a.manifest.clone()
            };
            let out = a
                .out
                .unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("report"));
            for path in report(&manifest, &out)? {
                println!("{}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_byte(&e))
        }
    }
}

fn exit_byte(e: &Error) -> u8 {
    u8::try_from(e.exit_code()).unwrap_or(1)
}
