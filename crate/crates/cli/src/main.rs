use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use impulsive_core::commands::{cmd_approximate, cmd_solve, cmd_verify, RunOptions, RunResult, VerifyTarget};
use impulsive_core::scenario::{load_scenario, parse_ks};

/// Simulate control systems driven by bounded-variation inputs.
#[derive(Debug, Parser)]
#[command(name = "impulsive", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the graph completion, integrate and write trajectory.csv and completion.csv.
    Solve(Common),
    /// Sweep k and write approx.csv with the limit errors.
    Approximate(Common),
    /// Run the correctness checks; `--scenario all` (default) runs every criterion.
    Verify(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file or builtin name (ex21, step_noncomm, step_comm).
    #[arg(long)]
    scenario: Option<String>,
    /// RK4 step, overriding the scenario.
    #[arg(long)]
    step: Option<f64>,
    /// Comma-separated k values, overriding the sweep.
    #[arg(long, value_delimiter = ',')]
    ks: Option<Vec<f64>>,
    /// Comma-separated probe times, overriding the sweep.
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl Common {
    fn options(&self) -> Result<RunOptions> {
        let ks = match &self.ks {
            Some(raw) => Some(parse_ks(raw).map_err(anyhow::Error::msg).context("invalid --ks")?),
            None => None,
        };
        Ok(RunOptions { step: self.step, ks, taus: self.taus.clone(), out: self.out.clone(), seed: self.seed })
    }

    fn scenario_name(&self) -> Result<&str> {
        match &self.scenario {
            Some(s) => Ok(s),
            None => bail!("--scenario is required"),
        }
    }
}

fn print(result: &RunResult) {
    for outcome in &result.outcomes {
        println!("{outcome}");
    }
    for (key, value) in &result.summary {
        println!("{key}: {value}");
    }
    for path in &result.outputs {
        println!("wrote {}", path.display());
    }
}

fn run(cli: Cli) -> Result<i32> {
    let result = match &cli.command {
        Command::Solve(c) => {
            let sc = load_scenario(c.scenario_name()?)?;
            cmd_solve(&sc, &c.options()?)?
        }
        Command::Approximate(c) => {
            let sc = load_scenario(c.scenario_name()?)?;
            cmd_approximate(&sc, &c.options()?)?
        }
        Command::Verify(c) => {
            let opts = c.options()?;
            match c.scenario.as_deref() {
                None | Some("all") => cmd_verify(VerifyTarget::All, &opts)?,
                Some(name) => {
                    let sc = load_scenario(name)?;
                    cmd_verify(VerifyTarget::Scenario(&sc), &opts)?
                }
            }
        }
    };
    print(&result);
    Ok(result.status)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(0) => ExitCode::SUCCESS,
        Ok(_) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
