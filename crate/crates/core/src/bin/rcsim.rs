use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use resilient_consensus::config::ScenarioConfig;
use resilient_consensus::harness::{self, Overrides};
use resilient_consensus::par::ExecMode;
use resilient_consensus::Error;

/// Resilient consensus simulator.
#[derive(Debug, Parser)]
#[command(name = "rcsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run every trial of a scenario and write trajectories, events and verdicts.
    Run(RunArgs),
    /// Run a Monte Carlo sweep and write success rates and counter tables.
    Sweep(RunArgs),
    /// Report connectivity and exhaustive robustness of a scenario's graph.
    CheckGraph {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Run trials one after another.
    #[arg(long)]
    sequential: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trials: self.trials,
        }
    }

    fn mode(&self) -> ExecMode {
        if self.sequential {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        }
    }
}

fn check_graph(path: &Path, seed: Option<u64>) -> Result<String, Error> {
    let (mut cfg, _) = ScenarioConfig::load(path)?;
    Overrides { seed, trials: None }.apply(&mut cfg);
    harness::graph_report(&cfg)
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
    let outcome = match &cli.command {
        Command::Run(args) => {
            harness::run_scenario(&args.config, &args.out, args.overrides(), args.mode()).map(|r| {
                format!(
                    "{}wrote {}\n",
                    harness::scenario_summary(&r),
                    args.out.display()
                )
            })
        }
        Command::Sweep(args) => {
            harness::run_sweep(&args.config, &args.out, args.overrides(), args.mode()).map(|r| {
                format!(
                    "{}wrote {}\n",
                    harness::sweep_summary(&r),
                    args.out.display()
                )
            })
        }
        Command::CheckGraph { config, seed } => check_graph(config, *seed),
    };
    match outcome {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
