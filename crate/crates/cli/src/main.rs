use std::path::PathBuf;
use std::process::ExitCode;

use bloch_transfer_cli::commands::{self, physicality_warning};
use bloch_transfer_cli::{CliError, Overrides, Problem, RunConfig};
use clap::{Args, Parser, Subcommand};

/// Free evolution and optimal population-transfer control of a thermally
/// damped qubit.
#[derive(Parser)]
#[command(name = "bloch-transfer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form uncontrolled evolution at the configured N
    Free,
    /// Solve the tracking problem; writes trajectory and controls CSVs
    Optimize,
    /// Solve for every N in n_sweep_values; writes one summary row per N
    Sweep,
    /// Run the numerical self-checks
    Verify,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Mean thermal occupation N
    #[arg(long = "n", global = true, allow_negative_numbers = true)]
    n_mean: Option<f64>,
    /// Control-energy weight
    #[arg(long, global = true, allow_negative_numbers = true)]
    theta: Option<f64>,
    /// Spontaneous emission rate
    #[arg(long, global = true)]
    gamma0: Option<f64>,
    /// Final time
    #[arg(long, global = true)]
    tf: Option<f64>,
    /// Number of grid intervals
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Output CSV path
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

fn load(common: &Common) -> Result<Problem, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides {
        n_mean: common.n_mean,
        theta: common.theta,
        gamma0: common.gamma0,
        tf: common.tf,
        steps: common.steps,
        output_path: common.out.clone(),
    });
    cfg.validate()
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let problem = load(&cli.common)?;
    if let Some(warning) = physicality_warning(&problem.x0) {
        eprintln!("{warning}");
    }
    match cli.command {
        Command::Free => {
            let out = commands::run_free(&problem)?;
            eprintln!("wrote {}", out.display());
        }
        Command::Optimize => {
            let output = commands::run_optimize(&problem)?;
            println!("{}", output.summary());
        }
        Command::Sweep => {
            let (out, rows) = commands::run_sweep(&problem)?;
            eprintln!("wrote {} ({} rows)", out.display(), rows.len());
        }
        Command::Verify => {
            let report = commands::verify(&problem);
            print!("{}", report.render());
            let failures = report.failures();
            if failures > 0 {
                return Err(CliError::Verification(failures));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
