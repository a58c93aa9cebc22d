//! `mevauction`: fit, simulate, verify, analyze and calibrate from the
//! command line.
//!
//! Exit status: 0 on success, 1 on an operational error (bad input, I/O,
//! solver failure, bad flags), 2 when `verify` finds a ranking violation.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{
    AnalyzeArgs, CalibrateArgs, FitArgs, GenerateArgs, GridArgs, IccArgs, MetricsArgs, Outcome, SolveArgs,
    VerifyArgs,
};
use crate::output::Outputs;

#[derive(Debug, Parser)]
#[command(name = "mevauction", version, about = "Auction-format revenue laboratory for MEV orderflow")]
struct Cli {
    /// Directory that relative output paths resolve against.
    #[arg(long, global = true, env = "MEVAUCTION_OUT_DIR", default_value = ".")]
    out_dir: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a log-normal to the extracted values of a transaction file.
    Fit(FitArgs),
    /// Write a synthetic, schema-conformant transaction file.
    Generate(GenerateArgs),
    /// Per-type summary, Gini and Pareto curve of a transaction file.
    Analyze(AnalyzeArgs),
    /// Simulate expected revenue over an (n, rho) grid.
    Grid(GridArgs),
    /// Check revenue equivalence and the linkage ranking on a grid.
    Verify(VerifyArgs),
    /// Linkage-gap and affiliation-premium surfaces, with dollar projections.
    Metrics(MetricsArgs),
    /// Calibrate the bidder count per MEV type from observed bribe shares.
    Calibrate(CalibrateArgs),
    /// Estimate affiliation from grouped bids by intra-class correlation.
    Icc(IccArgs),
    /// Solve and tabulate one first-price bid function.
    Solve(SolveArgs),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's own usage errors would exit 2, which is reserved for
            // verification failures.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let out = Outputs::new(cli.out_dir);
    let result = match cli.command {
        Command::Fit(a) => commands::fit(&a, &out),
        Command::Generate(a) => commands::generate(&a, &out),
        Command::Analyze(a) => commands::analyze(&a, &out),
        Command::Grid(a) => commands::grid(&a, &out),
        Command::Verify(a) => commands::verify(&a, &out),
        Command::Metrics(a) => commands::metrics(&a, &out),
        Command::Calibrate(a) => commands::calibrate(&a, &out),
        Command::Icc(a) => commands::icc(&a, &out),
        Command::Solve(a) => commands::solve(&a, &out),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::VerificationFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
