use std::path::PathBuf;
use std::process::ExitCode;

use binmp::{ExperimentConfig, ExperimentKind, Result};
use clap::{Args, Parser, Subcommand};
use log::{error, info};

#[derive(Parser)]
#[command(name = "binmp", version, about = "Train binary networks by message passing and rerun the sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact BP against SBP on glass instances with M = 2^N
    ConsistencyBp(RunArgs),
    /// S3P against S4P on glass instances
    ConsistencySp(RunArgs),
    /// Train accuracy of SBP and SNMP across training-set sizes
    PhaseSweep(RunArgs),
    /// Per-iteration marginal histograms for several L_SP values
    BinTrace(RunArgs),
    /// Mini-batch SNMP on MNIST over a grid of temperatures
    MnistTrain(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the output directory from the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Runs this single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Use the grids and engine sizes of the published experiments.
    #[arg(long)]
    paper_scale: bool,
}

impl Command {
    fn split(self) -> (ExperimentKind, RunArgs) {
        match self {
            Command::ConsistencyBp(a) => (ExperimentKind::ConsistencyBp, a),
            Command::ConsistencySp(a) => (ExperimentKind::ConsistencySp, a),
            Command::PhaseSweep(a) => (ExperimentKind::PhaseSweep, a),
            Command::BinTrace(a) => (ExperimentKind::BinTrace, a),
            Command::MnistTrain(a) => (ExperimentKind::MnistTrain, a),
        }
    }
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<()> {
    binmp::init_thread_pool()?;
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if cfg.kind != kind {
        return Err(binmp::CliError::Config(format!(
            "{} holds a {} experiment, not {kind}",
            args.config.display(),
            cfg.kind
        )));
    }
    if args.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(out) = args.out {
        cfg.out_dir = out;
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    for path in binmp::run(&cfg)? {
        info!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let (kind, args) = Cli::parse().command.split();
    match execute(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
