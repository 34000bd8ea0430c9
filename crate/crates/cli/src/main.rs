use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod config;
mod exact;
mod fail;
mod fourier;
mod gen;
mod io;
mod report;
mod sample;
mod verify;

use fail::CliError;

#[derive(Parser)]
#[command(name = "ctecs", version, about = "Noisy CT-ECS circuit simulation experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Master seed; every random stream is derived from it by label.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Experiment config JSON; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Largest qubit count the dense oracle may simulate.
    #[arg(long, global = true, default_value_t = ctecs::oracle::DEFAULT_DENSE_CAP)]
    pub dense_cap: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write seeded family instances as JSON files.
    Gen(gen::GenArgs),
    /// Dense output distribution, noisy distributions and Fourier spectrum.
    Exact(exact::ExactArgs),
    /// Estimate Fourier coefficients or build a low-degree table.
    Fourier(fourier::FourierArgs),
    /// Run the model A, model B or marginal sampling pipeline.
    Sample(sample::SampleArgs),
    /// Run an invariant suite against the dense oracle.
    Verify(verify::VerifyArgs),
    /// Theory-mode constants and summaries of earlier reports.
    Report(report::ReportArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| CliError::Usage(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Gen(a) => gen::run(&cli.global, a),
        Command::Exact(a) => exact::run(&cli.global, a),
        Command::Fourier(a) => fourier::run(&cli.global, a),
        Command::Sample(a) => sample::run(&cli.global, a),
        Command::Verify(a) => verify::run(&cli.global, a),
        Command::Report(a) => report::run(&cli.global, a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
