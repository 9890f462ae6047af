//! `sspt`: streamline-specific parameter tractography front end.
//!
//! Exit codes: 0 success, 1 runtime/data error, 2 usage/config error.

mod commands;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sspt_core::Error as CoreError;

#[derive(Parser)]
#[command(
    name = "sspt",
    about = "Probabilistic tractography with per-streamline parameters",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track streamlines, each with its own sampled parameter set.
    Track(commands::TrackArgs),
    /// Histogram accepted/attempted parameters from a records file.
    Analyze(commands::AnalyzeArgs),
    /// Cluster a tractogram with QuickBundles.
    Cluster(commands::ClusterArgs),
    /// Suggest refined sampling ranges from acceptance histograms.
    Refine(commands::RefineArgs),
    /// Generate a synthetic phantom (FOD volume plus ROI masks).
    Phantom(commands::PhantomArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Track(args) => commands::track(args),
        Command::Analyze(args) => commands::analyze(args),
        Command::Cluster(args) => commands::cluster(args),
        Command::Refine(args) => commands::refine(args),
        Command::Phantom(args) => commands::phantom(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                CoreError::Config(_) | CoreError::Parameter(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
