use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Args;

use fair_mdp::fairness::{audit, Definition, DEFAULT_TIE_TOL};
use fair_mdp::planning::{value_iteration, DEFAULT_PLAN_TOL};
use fair_mdp::Trace;

use crate::common::{emit, load_mdp, CliError};

#[derive(Args, Debug)]
pub struct AuditArgs {
    /// JSON-lines trace: {t, state, dist, action, reward} per line.
    pub trace: PathBuf,
    /// MDP file the trace was recorded on.
    pub mdp: PathBuf,
    #[arg(long, value_enum, default_value = "exact")]
    pub definition: DefinitionArg,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = DEFAULT_TIE_TOL)]
    pub tie_tol: f64,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
pub enum DefinitionArg {
    Exact,
    Choice,
    Action,
}

impl From<DefinitionArg> for Definition {
    fn from(d: DefinitionArg) -> Self {
        match d {
            DefinitionArg::Exact => Definition::Exact,
            DefinitionArg::Choice => Definition::Choice,
            DefinitionArg::Action => Definition::Action,
        }
    }
}

pub fn run(args: AuditArgs) -> Result<ExitCode, CliError> {
    anyhow::ensure!(
        args.alpha >= 0.0,
        "--alpha must be nonnegative, got {}",
        args.alpha
    );
    let m = load_mdp(&args.mdp)?;
    let file =
        File::open(&args.trace).map_err(|e| anyhow::anyhow!("{}: {e}", args.trace.display()))?;
    let trace = Trace::read_jsonl(BufReader::new(file))?;
    let (_, q) = value_iteration(&m, DEFAULT_PLAN_TOL.min(args.tie_tol / 100.0).max(1e-14))?;
    let report = audit(&trace, &q, args.definition.into(), args.alpha, args.tie_tol)?;
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    emit(args.out.as_deref(), &text)?;
    Ok(if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(2)
    })
}
