//! `driftstop`: solve, verify and simulate the optimal liquidation problem
//! for an asset with a filtered unknown drift.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 engine failure, 4 a hard
//! verification check failed.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{Axis, EngineKind, Overrides, Run};
use config::RunConfig;
use error::CliError;

#[derive(Parser)]
#[command(name = "driftstop", version, about = "Optimal liquidation under a filtered unknown drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the value surface and stopping boundary.
    Solve(Common),
    /// Check the boundary against the integral equation and the value
    /// surface against its shape properties.
    Verify(Common),
    /// Monte Carlo values of the boundary rule and the reference rules.
    Simulate(Common),
    /// Boundaries, values and improvement along sigma or gamma.
    Sweep(Common),
    /// Run verify and simulate together with the cross checks between them.
    Check(Common),
    /// Dump the posterior-mean dispersion on the configured grid.
    PsiTable(Common),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `outputs` in the configuration.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed; overrides `sim.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Expectation engine for the integral-equation residual.
    #[arg(long, value_enum)]
    engine: Option<EngineKind>,
    /// Use this `t,h` boundary instead of the solved one.
    #[arg(long)]
    boundary: Option<PathBuf>,
    #[arg(long, value_enum)]
    axis: Option<Axis>,
    #[arg(long, value_delimiter = ',')]
    values: Option<Vec<f64>>,
}

type Action = fn(&Run) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let (common, action): (Common, Action) = match cli.command {
        Command::Solve(c) => (c, commands::solve),
        Command::Verify(c) => (c, commands::verify),
        Command::Simulate(c) => (c, commands::simulate),
        Command::Sweep(c) => (c, commands::sweep),
        Command::Check(c) => (c, commands::check),
        Command::PsiTable(c) => (c, commands::psi_table),
    };
    let cfg = RunConfig::load(&common.config)?;
    let flags = Overrides {
        out: common.out,
        seed: common.seed,
        engine: common.engine,
        boundary: common.boundary,
        axis: common.axis,
        values: common.values,
    };
    action(&Run::new(cfg, flags)?)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("driftstop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
