use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use mpp::commands::{self, CliError};
use mpp_core::sim::Behavior;

#[derive(Parser)]
#[command(name = "mpp", version, about = "Markov persuasion processes: benchmarks, lagged models, robust mechanisms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Optimal mechanism under the no- or full-history model.
    Solve {
        #[arg(long, default_value = "no")]
        model: String,
        /// Write the solution as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        instance: PathBuf,
    },
    /// Local search for the lagged model with a bounded-memory mechanism.
    Partial {
        #[arg(long, default_value_t = 1)]
        lag: usize,
        /// K or A..B; lower levels are always solved first as warm starts.
        #[arg(long, default_value = "0")]
        memory: String,
        #[arg(long, default_value_t = 50)]
        starts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Obedience tolerance of the final check.
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
        /// Directory for partial.csv and one mechanism JSON per level.
        #[arg(long)]
        out: Option<PathBuf>,
        instance: PathBuf,
    },
    /// Robust mechanism for prior errors up to epsilon, with its checks.
    Robust {
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 10_000)]
        verify_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the certificate as JSON.
        #[arg(long)]
        out: Option<PathBuf>,
        instance: PathBuf,
    },
    /// Sufficient condition for the full- and no-history optima to coincide.
    CheckEquality {
        #[arg(long)]
        out: Option<PathBuf>,
        instance: PathBuf,
    },
    /// Simulates a trajectory and prints a CSV summary.
    Simulate {
        /// Mechanism JSON, or a solution file containing one.
        #[arg(long)]
        mechanism: PathBuf,
        #[arg(short = 'T', long = "steps", default_value_t = 100_000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Receivers best-respond under this model (no, full, lag) instead of following.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        lag: Option<usize>,
        /// Write the summary CSV here as well.
        #[arg(long)]
        out: Option<PathBuf>,
        instance: PathBuf,
    },
}

fn run(cli: Cli) -> Result<String, CliError> {
    let cap = commands::slice_cap()?;
    match cli.command {
        Command::Solve { model, out, instance } => {
            let model = commands::parse_model(&model, None)?;
            let inst = commands::load_instance(&instance)?;
            commands::solve(&inst, model, out.as_deref())
        }
        Command::Partial { lag, memory, starts, seed, tol, out, instance } => {
            let memory = commands::parse_memory(&memory)?;
            let inst = commands::load_instance(&instance)?;
            let mut timings = String::new();
            let csv = commands::partial(&inst, lag, memory, starts, seed, tol, cap, out.as_deref(), &mut timings);
            eprint!("{timings}");
            csv
        }
        Command::Robust { epsilon, verify_samples, seed, out, instance } => {
            let inst = commands::load_instance(&instance)?;
            commands::robust(&inst, epsilon, verify_samples, seed, cap, out.as_deref())
        }
        Command::CheckEquality { out, instance } => {
            let inst = commands::load_instance(&instance)?;
            commands::check_equality(&inst, out.as_deref())
        }
        Command::Simulate { mechanism, steps, seed, model, lag, out, instance } => {
            let inst = commands::load_instance(&instance)?;
            let sigma = commands::load_mechanism(&mechanism, &inst)?;
            let behavior = match model {
                None => Behavior::Follow,
                Some(m) => Behavior::BestRespond(commands::parse_model(&m, lag)?),
            };
            let csv = commands::simulate_summary(&inst, &sigma, steps, seed, behavior, cap)?;
            if let Some(path) = out {
                std::fs::write(&path, &csv).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            }
            Ok(csv)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code as u8)
        }
    }
}
