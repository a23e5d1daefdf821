use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ymh_cli::{CliError, CliResult, Command, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ymh", version, about = "Lattice Yang-Mills-Higgs experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Time series of observables plus a final checkpoint.
    Simulate(Common),
    /// Curvature constants over a (beta, kappa) grid.
    Bounds(Common),
    /// Plaquette correlations against distance with an exponential fit.
    Massgap(Common),
    /// Wilson loop variance and factorization across N.
    Largen(Common),
    /// Full measure against the unitary-gauge measure.
    GaugefixCheck(Common),
    /// Langevin (extrapolated in dt) against Metropolis.
    OracleCompare(Common),
}

#[derive(Args)]
struct Common {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path, `-` for stdout.
    #[arg(long)]
    out: Option<String>,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// KEY=VALUE, applied after the config file; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn execute(command: Command, args: Common) -> CliResult<()> {
    let mut overrides = args.overrides;
    if let Some(seed) = args.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(out) = args.out {
        overrides.push(format!("output=\"{}\"", out.replace('\\', "\\\\").replace('"', "\\\"")));
    }
    let cfg = ExperimentConfig::load(args.config.as_deref(), &overrides)?;
    let outcome = command.run(&cfg, args.threads)?;
    outcome.table.write(Path::new(&cfg.output))?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Bounds(a) => (Command::Bounds, a),
        Cmd::Massgap(a) => (Command::Massgap, a),
        Cmd::Largen(a) => (Command::Largen, a),
        Cmd::GaugefixCheck(a) => (Command::GaugefixCheck, a),
        Cmd::OracleCompare(a) => (Command::OracleCompare, a),
    };
    match execute(command, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ymh {}: {e}", command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &CliError) -> u8 {
    e.exit_code() as u8
}
