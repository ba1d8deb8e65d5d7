use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gibbscal_cli::{run, CliError, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "gibbscal", version, about = "Gibbs posteriors with calibrated learning rates")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Empirical risk minimizer.
    Fit(Flags),
    /// Gibbs posterior draws summarized by mean, covariance and regions.
    Sample(Flags),
    /// Bootstrap calibration of the learning rate.
    Calibrate(Flags),
    /// Monte Carlo coverage study on a simulated model.
    Simulate(Flags),
    /// Coverage as a function of the learning rate.
    Curve(Flags),
    /// Sandwich matrices, oracle learning rate and normal-approximation distance.
    Diagnose(Flags),
}

#[derive(Args)]
struct Flags {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "GIBBSCAL_WORKERS")]
    workers: Option<usize>,
    /// Output JSON path; CSV side tables go next to it.
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Bootstrap replicates per coverage estimate.
    #[arg(long = "B")]
    b: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
}

fn dispatch(cmd: Command, flags: Flags) -> Result<(), CliError> {
    let mut cfg = RunConfig::from_path(&flags.config)?;
    if cfg.command != cmd {
        return Err(CliError::Usage(format!(
            "config is for `{}` but `{}` was requested",
            cfg.command.name(),
            cmd.name()
        )));
    }
    cfg.apply(&Overrides {
        seed: flags.seed,
        workers: flags.workers,
        out: flags.out,
        eta: flags.eta,
        alpha: flags.alpha,
        b: flags.b,
        n: flags.n,
        reps: flags.reps,
        tau: flags.tau,
    })?;
    run::run(&cfg).map(|_| ())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (cmd, flags) = match cli.command {
        Cmd::Fit(f) => (Command::Fit, f),
        Cmd::Sample(f) => (Command::Sample, f),
        Cmd::Calibrate(f) => (Command::Calibrate, f),
        Cmd::Simulate(f) => (Command::Simulate, f),
        Cmd::Curve(f) => (Command::Curve, f),
        Cmd::Diagnose(f) => (Command::Diagnose, f),
    };
    match dispatch(cmd, flags) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
