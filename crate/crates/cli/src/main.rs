//! `fair-mdp`: planning, auditing and experiment runs for tabular MDPs.
//!
//! Exit codes: 0 on success or a passing audit, 1 on usage or input
//! errors, 2 on a failing audit.

mod audit;
mod chain_lb;
mod common;
mod fair_e3;
mod plan;
mod simulate;
mod sweep;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use common::CliError;

const SEED_RULE: &str =
    "Seeds: run i of a command uses seed (root XOR i), fed to ChaCha8 seed_from_u64.";

#[derive(Parser, Debug)]
#[command(name = "fair-mdp", version, about = "Fairness-constrained learning on tabular MDPs", after_help = SEED_RULE)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimal values, Q table and stationary distribution of the fair optimal policy.
    Plan(plan::PlanArgs),
    /// Audit a JSON-lines trace against an MDP's optimal Q values.
    Audit(audit::AuditArgs),
    /// Write the lower-bound chain M(x) as an MDP file.
    MakeChain(simulate::MakeChainArgs),
    /// Record a trace of a baseline learner.
    Simulate(simulate::SimulateArgs),
    /// First-arrival times on the chain for a range of lengths (CSV).
    #[command(after_help = SEED_RULE)]
    ChainLb(chain_lb::ChainLbArgs),
    /// Run Fair-E3 over several seeds and summarize (JSON).
    #[command(name = "fair-e3", after_help = SEED_RULE)]
    FairE3(fair_e3::FairE3Args),
    /// Run a parameter grid from a JSON config, resuming finished cells (CSV).
    #[command(after_help = SEED_RULE)]
    Sweep(sweep::SweepArgs),
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Plan(a) => plan::run(a),
        Command::Audit(a) => audit::run(a),
        Command::MakeChain(a) => simulate::make_chain(a),
        Command::Simulate(a) => simulate::run(a),
        Command::ChainLb(a) => chain_lb::run(a),
        Command::FairE3(a) => fair_e3::run(a),
        Command::Sweep(a) => sweep::run(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
