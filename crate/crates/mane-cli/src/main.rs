//! `mane`: geodesics of the Mane potential and hyperbolic motions.
//!
//! Three subcommands, each driven by one self-describing JSON problem spec:
//!
//! - `geodesic`: solve one fixed-endpoint geodesic, write result JSON and the
//!   path CSV;
//! - `hyperbolic`: run the dyadic construction, write the report JSON and the
//!   defect-curve CSV;
//! - `verify`: run the sampling property suites (metric axioms, gradients,
//!   envelope domination, shooting oracle) and write a machine-readable
//!   summary.
//!
//! Exit codes: 0 success, 1 malformed spec, 2 non-convergence, 3 collision
//! obstruction, 4 verification failure. Diagnostics go to stderr, data to
//! files.

mod cmds;
mod spec;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "mane", version, about = "Mane-potential geodesics and hyperbolic motions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Problem spec JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Override the spec's mode (strict | exploratory).
    #[arg(long)]
    mode: Option<String>,
    /// Worker threads for independent solves (0 = library default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Seed for the sampling suites.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (defaults to the spec's `out_dir`, then `.`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Suppress progress notes on stderr.
    #[arg(long, default_value_t = false)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a fixed-endpoint geodesic.
    Geodesic(Common),
    /// Run the hyperbolic construction over a dyadic range.
    Hyperbolic(Common),
    /// Run the verification suites.
    Verify(Common),
}

type CmdFn = fn(&spec::ProblemSpec, &cmds::Ctx) -> Result<(), cmds::CmdError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&Common, CmdFn) =
        match &cli.command {
            Command::Geodesic(c) => (c, cmds::cmd_geodesic),
            Command::Hyperbolic(c) => (c, cmds::cmd_hyperbolic),
            Command::Verify(c) => (c, cmds::cmd_verify),
        };

    let mut problem = match spec::ProblemSpec::load(&common.spec) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    if let Some(mode) = &common.mode {
        match mode.as_str() {
            "strict" => problem.mode = spec::SpecMode::Strict,
            "exploratory" => problem.mode = spec::SpecMode::Exploratory,
            other => {
                eprintln!("error: field mode: unknown value {other:?}");
                return ExitCode::from(1);
            }
        }
    }

    let workers = mane_core::parallel::configure_workers(common.workers);
    let out_dir = common
        .out
        .clone()
        .or_else(|| problem.out_dir.clone().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    let ctx = cmds::Ctx { out_dir, seed: common.seed, quiet: common.quiet, workers };

    match run(&problem, &ctx) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
