use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Args;

use fair_mdp::chain::{coupling_experiment, ChainSpec, ChoiceFairLearner, HitRecord};
use fair_mdp::fair_e3::{baseline_greedy_e3, baseline_uniform};

use crate::common::{
    csv_preamble, default_jobs, derive_seeds, emit, parse_range, thread_pool, CliError,
};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ChainLearner {
    Uniform,
    ChoiceFair(f64),
    Greedy,
}

impl FromStr for ChainLearner {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(ChainLearner::Uniform),
            "greedy" => Ok(ChainLearner::Greedy),
            _ => match s.strip_prefix("choice-fair:") {
                Some(a) => a
                    .parse::<f64>()
                    .map(ChainLearner::ChoiceFair)
                    .map_err(|e| format!("bad alpha '{a}': {e}")),
                None => Err(format!(
                    "unknown learner '{s}' (uniform, greedy, choice-fair:ALPHA)"
                )),
            },
        }
    }
}

#[derive(Args, Debug)]
pub struct ChainLbArgs {
    /// Chain lengths, `a..b` inclusive.
    #[arg(long, default_value = "2..10")]
    pub n_range: String,
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    #[arg(long, default_value_t = 0.9)]
    pub gamma: f64,
    /// `uniform`, `greedy` or `choice-fair:ALPHA`.
    #[arg(long, default_value = "uniform")]
    pub learner: ChainLearner,
    #[arg(long, default_value_t = 100)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub root_seed: u64,
    /// Steps before a run is censored.
    #[arg(long, default_value_t = 1_000_000)]
    pub t_cap: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timestamp: bool,
    #[arg(long, env = "FAIR_MDP_JOBS")]
    pub jobs: Option<usize>,
}

fn run_one(
    spec: &ChainSpec,
    learner: ChainLearner,
    seeds: &[u64],
    t_cap: u64,
) -> anyhow::Result<Vec<HitRecord>> {
    let k = spec.k;
    let records = match learner {
        ChainLearner::Uniform => coupling_experiment(spec, |_| baseline_uniform(k), seeds, t_cap)?,
        ChainLearner::ChoiceFair(alpha) => {
            ChoiceFairLearner::new(k, alpha)?;
            coupling_experiment(
                spec,
                |_| ChoiceFairLearner::new(k, alpha).expect("validated"),
                seeds,
                t_cap,
            )?
        }
        ChainLearner::Greedy => {
            baseline_greedy_e3(spec.n, k, spec.gamma)?;
            let (n, gamma) = (spec.n, spec.gamma);
            coupling_experiment(
                spec,
                |_| baseline_greedy_e3(n, k, gamma).expect("validated"),
                seeds,
                t_cap,
            )?
        }
    };
    Ok(records)
}

pub fn run(args: ChainLbArgs) -> Result<ExitCode, CliError> {
    let (lo, hi) = parse_range(&args.n_range)?;
    anyhow::ensure!(
        lo >= 2,
        "chain length must be at least 2, got range {}",
        args.n_range
    );
    anyhow::ensure!(args.seeds >= 1, "--seeds must be at least 1");
    let pool = thread_pool(args.jobs.unwrap_or_else(default_jobs))?;
    let seeds = derive_seeds(args.root_seed, args.seeds);
    let alpha = match args.learner {
        ChainLearner::ChoiceFair(a) => a.to_string(),
        _ => String::new(),
    };
    let mut text = csv_preamble(args.no_timestamp);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["seed", "n", "k", "alpha", "first_hit", "censored"])?;
    for n in lo..=hi {
        let spec = ChainSpec::new(n, args.k, 1.0, args.gamma)?;
        let records = pool.install(|| run_one(&spec, args.learner, &seeds, args.t_cap))?;
        for r in records {
            w.write_record([
                r.seed.to_string(),
                n.to_string(),
                args.k.to_string(),
                alpha.clone(),
                r.steps_to_reach_sn.to_string(),
                r.censored.to_string(),
            ])?;
        }
    }
    write!(text, "{}", String::from_utf8(w.into_inner()?)?).unwrap();
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
