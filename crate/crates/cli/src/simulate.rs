use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, ValueEnum};

use fair_mdp::chain::ChainSpec;
use fair_mdp::fair_e3::{baseline_greedy_e3, baseline_uniform};
use fair_mdp::fairness::{fair_optimal_policy, DEFAULT_TIE_TOL};
use fair_mdp::planning::{value_iteration, DEFAULT_PLAN_TOL};
use fair_mdp::sim::simulate;
use fair_mdp::{Learner, StochasticPolicy};

use crate::common::{chain_mdp, emit, load_mdp, CliError};

#[derive(Args, Debug)]
pub struct MakeChainArgs {
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Reward of the last state.
    #[arg(long, default_value_t = 1.0)]
    pub x: f64,
    #[arg(long)]
    pub gamma: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn make_chain(args: MakeChainArgs) -> Result<ExitCode, CliError> {
    let m = chain_mdp(&ChainSpec::new(args.n, args.k, args.x, args.gamma)?)?;
    let mut text = m.to_json();
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum BaselineArg {
    Uniform,
    Greedy,
    /// Uniform over the optimal actions of each state.
    Optimal,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[arg(long)]
    pub mdp: PathBuf,
    #[arg(long, value_enum, default_value = "uniform")]
    pub learner: BaselineArg,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub start: usize,
    /// JSON-lines output; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: SimulateArgs) -> Result<ExitCode, CliError> {
    anyhow::ensure!(args.steps >= 1, "--steps must be at least 1");
    let m = load_mdp(&args.mdp)?;
    let mut learner: Box<dyn Learner> = match args.learner {
        BaselineArg::Uniform => Box::new(baseline_uniform(m.k())),
        BaselineArg::Greedy => Box::new(baseline_greedy_e3(m.n(), m.k(), m.gamma())?),
        BaselineArg::Optimal => {
            let (_, q) = value_iteration(&m, DEFAULT_PLAN_TOL)?;
            let pi: StochasticPolicy = fair_optimal_policy(&m, &q, DEFAULT_TIE_TOL)?;
            Box::new(pi)
        }
    };
    let trace = simulate(&m, &mut learner, args.start, args.steps, args.seed)?;
    match args.out {
        Some(path) => {
            let file =
                File::create(&path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
            trace.write_jsonl(BufWriter::new(file))?;
        }
        None => trace.write_jsonl(std::io::stdout().lock())?,
    }
    Ok(ExitCode::SUCCESS)
}
