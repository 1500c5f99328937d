use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use idd_sim::{Experiment, ExperimentConfig, Overrides};
use serde_json::json;

#[derive(Parser)]
#[command(name = "idd-sim", version = idd_sim::output::VERSION, about = "Pipelined MIMO-OFDM IDD receiver simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Packet error rate against SNR for each estimator.
    PerSweep(Common),
    /// Measured MI trajectories and transfer curves.
    ExitChart(Common),
    /// Open-loop estimator MSE against the closed-form optimum.
    MseOpenloop(Common),
    /// Lag-2 residual correlation before and after puncturing.
    CorrProbe(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration; defaults are used for anything it omits.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated SNR points in dB.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    snr: Option<Vec<f64>>,
    /// perfect, initial, proposed, song or emdd.
    #[arg(long)]
    estimator: Option<String>,
    /// Puncturing threshold constant.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Also write per-step estimator diagnostics.
    #[arg(long)]
    diag: bool,
}

fn fail(kind: &str, err: &anyhow::Error, code: u8) -> ExitCode {
    let e = json!({ "error": { "kind": kind, "message": format!("{err:#}") } });
    eprintln!("{e}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::PerSweep(a) => (Experiment::PerSweep, a),
        Command::ExitChart(a) => (Experiment::ExitChart, a),
        Command::MseOpenloop(a) => (Experiment::MseOpenloop, a),
        Command::CorrProbe(a) => (Experiment::CorrProbe, a),
    };
    let mut cfg = match &args.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail("invalid_config", &e, 2),
        },
        None => ExperimentConfig::default(),
    };
    cfg.experiment = experiment;
    cfg.diag |= args.diag;
    cfg.apply(&Overrides {
        seed: args.seed,
        snr_db: args.snr,
        estimator: args.estimator,
        c: args.c,
        workers: args.workers,
    });
    if let Err(e) = cfg.validate() {
        return fail("invalid_config", &e, 2);
    }
    match idd_sim::run_to_dir(&cfg, &args.out) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => fail("runtime", &e, 1),
    }
}
