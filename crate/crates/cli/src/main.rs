use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tullock_cli::commands::{cmd_find_equilibrium, cmd_run, cmd_sweep_alpha, read_scenario};
use tullock_cli::CliError;
use tullock_core::analysis::CriticalSearchOptions;

/// Best-response dynamics in Tullock contests.
///
/// Exit codes: 0 success, 2 invalid scenario or arguments, 3 numerical
/// failure, 4 I/O failure.
#[derive(Debug, Parser)]
#[command(name = "tullock", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario; writes trace.csv and report.json.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Critical step search for each cost ratio; writes alpha_star.csv and sweep_report.json.
    SweepAlpha {
        /// Comma-separated cost ratios, each >= 1.
        #[arg(long, value_delimiter = ',', num_args = 0..)]
        d: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (default: all hardware threads).
        #[arg(long)]
        jobs: Option<usize>,
        /// Relative bracket width at which each search stops.
        #[arg(long, default_value_t = 1e-2)]
        search_tol: f64,
        /// Step budget per probe.
        #[arg(long, default_value_t = 100_000)]
        budget: u64,
    },
    /// Compute a certified eps-equilibrium of a scenario's instance.
    FindEquilibrium {
        scenario: PathBuf,
        #[arg(long)]
        eps: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { scenario, out } => {
            let text = read_scenario(&scenario)?;
            let report = cmd_run(&text, &out)?;
            println!(
                "{}: {:?} after {} steps, final V = {:e}",
                report.variant, report.termination, report.steps, report.final_potential
            );
        }
        Command::SweepAlpha {
            d,
            out,
            jobs,
            search_tol,
            budget,
        } => {
            let opts = CriticalSearchOptions {
                search_tol,
                budget,
                ..Default::default()
            };
            let report = cmd_sweep_alpha(&d, &out, jobs, &opts)?;
            for e in &report.entries {
                println!("d = {}: alpha* = {} in [{}, {}] ({} runs)", e.d, e.alpha_star, e.bracket.0, e.bracket.1, e.runs);
            }
            if let Some(fit) = report.fit {
                println!("fit: slope {} intercept {} R^2 {}", fit.slope, fit.intercept, fit.r_squared);
            }
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::FindEquilibrium { scenario, eps, out } => {
            let text = read_scenario(&scenario)?;
            let res = cmd_find_equilibrium(&text, eps, &out)?;
            println!("x* = {:?}, max regret {:e}", res.x_star, res.max_regret);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
