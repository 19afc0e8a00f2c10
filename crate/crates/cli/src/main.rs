//! `covcal`: run the synthetic, ablation and real-data experiments and print
//! contamination bounds.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "covcal", version, about = "Contamination-robust selective conformal prediction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunOpts {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Seed override: an inclusive range `a..b` or a comma list.
    #[arg(long)]
    seeds: Option<String>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Miscoverage level override.
    #[arg(long)]
    alpha: Option<f64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Main synthetic experiment.
    Simulate {
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Controlled-contamination ablation with coverage and bound-gap plots.
    Ablate {
        #[command(flatten)]
        opts: RunOpts,
        /// Comma-separated injected contamination levels (overrides the config).
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Real-data pipeline on a log-fold-change or cell-level CSV.
    Real {
        /// Input CSV (`gene,...` LFC layout or `cell_id,perturbation,...` cells).
        #[arg(long)]
        data: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
        /// Bootstrap replicates for coverage standard deviations.
        #[arg(long)]
        bootstrap: Option<usize>,
    },
    /// Print g(δ, n), the coverage bound and corrected-level feasibility.
    Bound {
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.05,0.1,0.15,0.2,0.3")]
        deltas: Vec<f64>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COVCAL_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { opts } => commands::simulate(&opts.into()),
        Command::Ablate { opts, deltas } => commands::ablate(&opts.into(), deltas),
        Command::Real { data, opts, bootstrap } => commands::real(&data, &opts.into(), bootstrap),
        Command::Bound { alpha, n, deltas } => commands::bound(alpha, n, &deltas),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {:#}", e.error);
            ExitCode::from(e.kind.code())
        }
    }
}

impl From<RunOpts> for commands::RunOptions {
    fn from(o: RunOpts) -> Self {
        commands::RunOptions { config: o.config, out: o.out, seeds: o.seeds, threads: o.threads, alpha: o.alpha }
    }
}
