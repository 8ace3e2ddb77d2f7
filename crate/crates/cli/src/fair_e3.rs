use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::Args;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use fair_mdp::estimation::Thresholds;
use fair_mdp::fair_e3::{run_fair_e3, EscapeMode, EstimateSource, FairE3Config, RunMetrics};
use fair_mdp::fairness::{delta_compliant, fair_optimal_policy, DEFAULT_TIE_TOL};
use fair_mdp::markov::{mixing_time, DEFAULT_MIXING_CAP};
use fair_mdp::planning::{value_iteration, DEFAULT_PLAN_TOL};
use fair_mdp::Mdp;

use crate::common::{
    chain_mdp, default_jobs, derive_seeds, emit, load_mdp, median, parse_chain, thread_pool,
    CliError,
};

/// `exact` or `mc:REPS`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EscapeArg(pub EscapeMode);

impl FromStr for EscapeArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "exact" {
            return Ok(EscapeArg(EscapeMode::Exact));
        }
        match s.strip_prefix("mc:") {
            Some(r) => r
                .parse()
                .map(|reps| EscapeArg(EscapeMode::MonteCarlo { reps }))
                .map_err(|e| format!("bad walk count '{r}': {e}")),
            None => Err(format!("unknown escape mode '{s}' (exact, mc:REPS)")),
        }
    }
}

/// Learner parameters shared by `fair-e3` and `sweep`. Unset optional
/// fields fall back to the library defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSpec {
    pub eps: f64,
    pub alpha: f64,
    pub delta: f64,
    /// Fixed mixing-time guess. When absent and `tstar_sequential` is off,
    /// the mixing time of the true optimal policy at `eps` is used.
    pub tstar: Option<u64>,
    pub tstar_sequential: bool,
    /// Fixed known-state threshold; otherwise the formulas scaled by `scale`.
    pub mq: Option<u64>,
    pub scale: f64,
    pub horizon: Option<u64>,
    pub beta: Option<f64>,
    pub tie_tol: f64,
    pub escape: Option<String>,
    pub oracle: bool,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            eps: 0.1,
            alpha: 0.1,
            delta: 0.1,
            tstar: None,
            tstar_sequential: false,
            mq: None,
            scale: 1.0,
            horizon: None,
            beta: None,
            tie_tol: DEFAULT_TIE_TOL,
            escape: None,
            oracle: false,
        }
    }
}

impl RunSpec {
    pub fn build(&self, m: &Mdp) -> anyhow::Result<FairE3Config> {
        anyhow::ensure!(
            !(self.tstar.is_some() && self.tstar_sequential),
            "a fixed T* conflicts with the sequential schedule"
        );
        let tstar = if self.tstar_sequential {
            None
        } else {
            Some(match self.tstar {
                Some(t) => t,
                None => optimal_mixing_time(m, self.eps, self.tie_tol)?,
            })
        };
        let placeholder = Thresholds::override_mq(1)?;
        let mut cfg = FairE3Config::new(
            self.eps,
            self.alpha,
            self.delta,
            m.gamma(),
            tstar,
            placeholder,
        )?;
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(b) = self.beta {
            cfg.beta = b;
        }
        cfg.tie_tol = self.tie_tol;
        cfg.thresholds = match self.mq {
            Some(mq) => Thresholds::override_mq(mq)?,
            None => cfg.formula_thresholds(m.n(), m.k(), self.scale)?,
        };
        if let Some(e) = &self.escape {
            cfg.escape = e.parse::<EscapeArg>().map_err(anyhow::Error::msg)?.0;
        }
        if self.oracle {
            cfg.estimates = EstimateSource::Oracle(Box::new(m.clone()));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Mixing time at `eps` of the uniform-over-argmax optimal policy.
pub fn optimal_mixing_time(m: &Mdp, eps: f64, tie_tol: f64) -> anyhow::Result<u64> {
    let (_, q) = value_iteration(m, DEFAULT_PLAN_TOL)?;
    let pi = fair_optimal_policy(m, &q, tie_tol)?;
    Ok(mixing_time(m, &pi, eps.min(0.5), DEFAULT_MIXING_CAP)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub runs: usize,
    pub median_gap: f64,
    pub max_gap: f64,
    pub audit_pass_rate: f64,
    pub audit_failures: usize,
    pub delta_compliant: bool,
    pub mean_known_final: f64,
}

pub fn summarize(runs: &[RunMetrics], delta: f64) -> Summary {
    let mut gaps: Vec<f64> = runs.iter().map(|r| r.gap).collect();
    let failures = runs.iter().filter(|r| r.audit.violation_count > 0).count();
    let n = runs.len().max(1) as f64;
    Summary {
        runs: runs.len(),
        median_gap: median(&mut gaps),
        max_gap: gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        audit_pass_rate: (runs.len() - failures) as f64 / n,
        audit_failures: failures,
        delta_compliant: delta_compliant(failures, runs.len(), delta),
        mean_known_final: runs
            .iter()
            .map(|r| r.known_curve.last().map_or(0, |c| c.1) as f64)
            .sum::<f64>()
            / n,
    }
}

/// Runs every seed on the current rayon pool.
pub fn run_seeds(
    m: &Mdp,
    cfg: &FairE3Config,
    steps: usize,
    seeds: &[u64],
) -> anyhow::Result<Vec<RunMetrics>> {
    seeds
        .par_iter()
        .map(|&seed| Ok(run_fair_e3(m, cfg, steps, seed)?.metrics))
        .collect()
}

#[derive(Args, Debug)]
pub struct FairE3Args {
    /// MDP file; alternatively `--chain`.
    #[arg(conflicts_with = "chain", required_unless_present = "chain")]
    pub mdp: Option<PathBuf>,
    /// Chain instance, `n=3,k=2,x=1,gamma=0.9`.
    #[arg(long)]
    pub chain: Option<String>,
    #[arg(long, default_value_t = 0.1)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0.1)]
    pub delta: f64,
    /// Fixed mixing-time guess; defaults to the mixing time of the true optimal policy.
    #[arg(long = "Tstar", conflicts_with = "tstar_sequential")]
    pub tstar: Option<u64>,
    /// Try T* = 1, 2, ... sequentially.
    #[arg(long = "Tstar-sequential")]
    pub tstar_sequential: bool,
    /// Fixed known-state threshold.
    #[arg(long, conflicts_with = "scale")]
    pub mq: Option<u64>,
    /// Multiplier on the threshold formulas.
    #[arg(long, default_value_t = 1.0)]
    pub scale: f64,
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
    /// `exact` or `mc:REPS`.
    #[arg(long)]
    pub escape: Option<String>,
    /// Plan with the true model instead of estimates.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub root_seed: u64,
    /// Steps per run.
    #[arg(long = "T", default_value_t = 10_000)]
    pub steps: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, env = "FAIR_MDP_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Serialize)]
struct Output {
    config: RunSpec,
    runs: Vec<RunMetrics>,
    summary: Summary,
}

pub fn run(args: FairE3Args) -> Result<ExitCode, CliError> {
    anyhow::ensure!(args.seeds >= 1, "--seeds must be at least 1");
    let m = match (&args.mdp, &args.chain) {
        (Some(p), _) => load_mdp(p)?,
        (None, Some(c)) => chain_mdp(&parse_chain(c)?)?,
        (None, None) => anyhow::bail!("need an MDP file or --chain"),
    };
    let spec = RunSpec {
        eps: args.eps,
        alpha: args.alpha,
        delta: args.delta,
        tstar: args.tstar,
        tstar_sequential: args.tstar_sequential,
        mq: args.mq,
        scale: args.scale,
        horizon: args.horizon,
        beta: args.beta,
        tie_tol: args.tie_tol,
        escape: args.escape.clone(),
        oracle: args.oracle,
    };
    let cfg = spec.build(&m)?;
    let pool = thread_pool(args.jobs.unwrap_or_else(default_jobs))?;
    let seeds = derive_seeds(args.root_seed, args.seeds);
    let runs = pool.install(|| run_seeds(&m, &cfg, args.steps, &seeds))?;
    let summary = summarize(&runs, args.delta);
    let mut text = serde_json::to_string_pretty(&Output {
        config: spec,
        runs,
        summary,
    })?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(ExitCode::SUCCESS)
}
