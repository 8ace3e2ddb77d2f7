use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;
use serde::Serialize;

use fair_mdp::fairness::{fair_optimal_policy, DEFAULT_TIE_TOL};
use fair_mdp::markov::stationary_distribution;
use fair_mdp::planning::{value_iteration, DEFAULT_PLAN_TOL};

use crate::common::{emit, load_mdp, CliError};

#[derive(Args, Debug)]
pub struct PlanArgs {
    /// MDP file: {n, k, gamma, P, R}.
    pub mdp: PathBuf,
    /// Override the discount stored in the file.
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_PLAN_TOL)]
    pub tol: f64,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
    /// Also write the tables as JSON to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct PlanOutput {
    gamma: f64,
    vstar: Vec<f64>,
    qstar: Vec<Vec<f64>>,
    /// Stationary distribution of the uniform-over-argmax optimal policy,
    /// absent when that policy is not unichain.
    mustar: Option<Vec<f64>>,
}

pub fn run(args: PlanArgs) -> Result<ExitCode, CliError> {
    let mut m = load_mdp(&args.mdp)?;
    if let Some(g) = args.gamma {
        m = m.with_gamma(g)?;
    }
    let (v, q) = value_iteration(&m, args.tol)?;
    let pi = fair_optimal_policy(&m, &q, args.tie_tol)?;
    let mu = match stationary_distribution(&m, &pi, 1e-12) {
        Ok(mu) => Some(mu.0),
        Err(e) => {
            eprintln!("warning: no stationary distribution: {e}");
            None
        }
    };
    let mut table = String::new();
    write!(table, "state\tV*\tmu*").unwrap();
    for a in 0..m.k() {
        write!(table, "\tQ*(a{a})").unwrap();
    }
    table.push('\n');
    for s in 0..m.n() {
        let mu_s = mu
            .as_ref()
            .map_or("n/a".to_string(), |mu| format!("{:.6}", mu[s]));
        write!(table, "{s}\t{:.6}\t{mu_s}", v.get(s)).unwrap();
        for a in 0..m.k() {
            write!(table, "\t{:.6}", q.get(s, a)).unwrap();
        }
        table.push('\n');
    }
    emit(None, &table)?;
    if let Some(path) = args.out {
        let out = PlanOutput {
            gamma: m.gamma(),
            vstar: v.0.clone(),
            qstar: (0..m.n()).map(|s| q.row(s).to_vec()).collect(),
            mustar: mu,
        };
        emit(Some(&path), &serde_json::to_string_pretty(&out)?)?;
    }
    Ok(ExitCode::SUCCESS)
}
