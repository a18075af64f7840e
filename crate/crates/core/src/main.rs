use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use gossip_td::analysis::ErrorReport;
use gossip_td::augmented::FixedPoint;
use gossip_td::harness::{self, Experiment, ExperimentConfig};
use gossip_td::Result;

/// Gossip-coupled distributed TD(0) simulator.
///
/// Exit codes: 0 ok, 1 usage or I/O error, 2 assumption violated,
/// 3 numerical failure or divergence.
#[derive(Parser, Debug)]
#[command(name = "gossip-td", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the run seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override the number of learner steps.
    #[arg(long, global = true)]
    steps: Option<u64>,
    /// Override the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check every modelling assumption and print a report.
    Validate { config: String },
    /// Solve for the coupled fixed point and print it with the error report.
    Solve { config: String },
    /// Run the full experiment and write CSV and JSON artifacts.
    Run { config: String },
    /// Print the error bounds only.
    Bounds { config: String },
}

#[derive(Serialize)]
struct SolveOutput {
    fixed_point: FixedPoint,
    error_report: ErrorReport,
}

#[derive(Serialize)]
struct BoundsOutput {
    e: Vec<f64>,
    e_star: Vec<f64>,
    e2_bound: Vec<f64>,
    componentwise_bound_holds: bool,
    contraction: f64,
    beta: f64,
    side_condition: bool,
    max_error: f64,
    max_error_bound: f64,
    jbar_error: f64,
    jbar_bound: f64,
}

impl From<ErrorReport> for BoundsOutput {
    fn from(r: ErrorReport) -> Self {
        BoundsOutput {
            componentwise_bound_holds: r.componentwise_bound_holds(),
            max_error: r.max_e(),
            e: r.e,
            e_star: r.e_star,
            e2_bound: r.e2_bound,
            contraction: r.contraction,
            beta: r.beta,
            side_condition: r.side_condition,
            max_error_bound: r.max_error_bound,
            jbar_error: r.jbar_error,
            jbar_bound: r.jbar_bound,
        }
    }
}

fn load(cli: &Cli, arg: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::load(arg)?;
    if let Some(seed) = cli.seed {
        config.run.seed = seed;
    }
    if let Some(steps) = cli.steps {
        config.run.steps = steps;
    }
    if let Some(out) = &cli.out {
        config.out = out.clone();
    }
    Ok(config)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Validate { config } => {
            let exp = Experiment::prepare(&load(cli, config)?)?;
            for w in &exp.report.gossip.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&exp.report)
        }
        Command::Solve { config } => {
            let exp = Experiment::prepare(&load(cli, config)?)?;
            let fixed_point = exp.fixed_point()?;
            let error_report = exp.error_report(&fixed_point)?;
            print_json(&SolveOutput {
                fixed_point,
                error_report,
            })
        }
        Command::Bounds { config } => {
            let exp = Experiment::prepare(&load(cli, config)?)?;
            let fp = exp.fixed_point()?;
            print_json(&BoundsOutput::from(exp.error_report(&fp)?))
        }
        Command::Run { config } => {
            let config = load(cli, config)?;
            let bundle = harness::run_experiment(&config)?;
            for path in bundle.write_to(&config.out)? {
                println!("{}", path.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
