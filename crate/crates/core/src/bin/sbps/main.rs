//! `sbps` command-line front end.
//!
//! ```text
//! sbps fit --input data.csv --covariates "x1,x2,x1^2" --out results/
//! sbps simulate --preset sim1-small --out sim/
//! sbps report --dir sim/
//! ```

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod config;
mod fit;
mod report;
mod simulate;

#[derive(Parser)]
#[command(name = "sbps", version, about = "Subgroup effects with subgroup balancing propensity scores")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate subgroup effects on a CSV dataset.
    Fit(fit::FitArgs),
    /// Run a replicated simulation study.
    Simulate(simulate::SimulateArgs),
    /// Rebuild the summary of a saved run from its CSV files.
    Report(report::ReportArgs),
}

fn set_workers(workers: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = workers.filter(|&n| n > 0) {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Report(a) => report::run(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
