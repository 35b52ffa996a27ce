use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use krope::experiments::{
    counterexample::run_counterexample, diagnose::run_diagnose, garnet::garnet_sweep_output, ope::run_ope_trace,
    ExperimentConfig, ExperimentKind, RunOutput,
};

#[derive(Parser)]
#[command(name = "krope", version, about = "Tabular KROPE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train and diagnose encoders on random Garnet MDPs.
    GarnetSweep(Common),
    /// Divergence study on the four-state counterexample.
    Counterexample(Common),
    /// LSPE error of checkpointed encoders during training.
    OpeTrace(Common),
    /// One report row for an encoder file and an MDP file.
    Diagnose(Common),
}

#[derive(Args)]
struct Common {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the configured number of trials.
    #[arg(long)]
    trials: Option<usize>,
    /// Overrides the configured base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 uses all cores.
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

fn load(kind: ExperimentKind, args: &Common) -> krope::Result<(ExperimentConfig, PathBuf)> {
    let (mut cfg, base_dir) = match &args.config {
        Some(path) => {
            let cfg = ExperimentConfig::from_json_for_kind(&std::fs::read_to_string(path)?, kind)?;
            (cfg, path.parent().map(Path::to_path_buf).unwrap_or_default())
        }
        None => (ExperimentConfig::for_kind(kind), PathBuf::from(".")),
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.base_seed = s;
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.to_string_lossy().into_owned());
    }
    cfg.validate()?;
    Ok((cfg, base_dir))
}

fn run(kind: ExperimentKind, args: &Common) -> krope::Result<Vec<PathBuf>> {
    let (cfg, base_dir) = load(kind, args)?;
    let output: RunOutput = match kind {
        ExperimentKind::GarnetSweep => garnet_sweep_output(&cfg, args.jobs)?,
        ExperimentKind::Counterexample => run_counterexample(&cfg, args.jobs)?.output(),
        ExperimentKind::OpeTrace => run_ope_trace(&cfg, args.jobs)?.output(),
        ExperimentKind::Diagnose => run_diagnose(&cfg, &base_dir)?,
    };
    let dir = cfg.output.as_deref().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("results"));
    output.write_all(dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::GarnetSweep(a) => (ExperimentKind::GarnetSweep, a),
        Command::Counterexample(a) => (ExperimentKind::Counterexample, a),
        Command::OpeTrace(a) => (ExperimentKind::OpeTrace, a),
        Command::Diagnose(a) => (ExperimentKind::Diagnose, a),
    };
    match run(kind, args) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
