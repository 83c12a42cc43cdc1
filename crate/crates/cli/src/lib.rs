//! Command-line orchestration: argument parsing, spec-file merging, and the
//! experiment drivers behind each subcommand.
//!
//! Every command resolves its parameters (flags win over the optional JSON
//! spec file, which wins over defaults), runs, and writes a `manifest.json`
//! echoing the resolved parameters, tool version, and seed so the run can be
//! reproduced bit-identically.

use clap::{Parser, Subcommand};

pub mod commands;
pub mod ingest;
pub mod spec;

pub use ingest::{ingest_points, BinnedDataset, GridSpec};

#[derive(Parser)]
#[command(
    name = "sinkdiv",
    version,
    about = "Regularized transport divergences and hypothesis tests"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Sample empirical divergence statistics and their limit-law
    /// counterparts, with KDE summaries per (lambda, n) cell.
    SimulateClt(spec::SimulateArgs),
    /// One-sample bootstrap test (synthetic grid mode or binned-data mode).
    TestOne(spec::TestOneArgs),
    /// Two-sample bootstrap test with paired resampling.
    TestTwo(spec::TestTwoArgs),
    /// Rejection-rate curves over a (theta, lambda) grid.
    Power(spec::PowerArgs),
    /// Bin point records from a CSV into per-group empirical measures.
    Ingest(spec::IngestArgs),
    /// Average binned groups into a reference measure.
    Barycenter(spec::BarycenterArgs),
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::SimulateClt(args) => commands::simulate_clt(args),
        Command::TestOne(args) => commands::test_one(args),
        Command::TestTwo(args) => commands::test_two(args),
        Command::Power(args) => commands::power(args),
        Command::Ingest(args) => commands::ingest(args),
        Command::Barycenter(args) => commands::barycenter(args),
    }
}
