use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Mutex;

use clap::Args;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{Map, Value};

use fair_mdp::chain::ChainSpec;
use fair_mdp::fair_e3::{baseline_greedy_e3, baseline_uniform};
use fair_mdp::fairness::{audit_action, delta_compliant, fair_optimal_policy};
use fair_mdp::markov::stationary_distribution;
use fair_mdp::planning::value_iteration;
use fair_mdp::sim::{epsilon_optimality_gap, simulate};
use fair_mdp::{Learner, Mdp};

use crate::common::{
    chain_mdp, csv_preamble, default_jobs, derive_seeds, load_mdp, median, thread_pool, CliError,
};
use crate::fair_e3::{run_seeds, summarize, RunSpec};

/// Keys a grid may vary.
pub const GRID_KEYS: [&str; 10] = [
    "n", "k", "x", "gamma", "eps", "alpha", "delta", "mq", "tstar", "T",
];

const HEADER: [&str; 9] = [
    "key",
    "learner",
    "seeds",
    "T",
    "median_gap",
    "max_gap",
    "audit_pass_rate",
    "delta_compliant",
    "mean_known_final",
];

#[derive(Deserialize, Debug, Clone, PartialEq)]
#[serde(rename_all = "snake_case")]
pub enum Instance {
    Chain {
        n: usize,
        k: usize,
        x: f64,
        gamma: f64,
    },
    File(PathBuf),
}

#[derive(Deserialize, Debug, Clone, Copy, PartialEq, Default)]
pub enum SweepLearner {
    #[default]
    #[serde(rename = "fair-e3")]
    FairE3,
    #[serde(rename = "uniform")]
    Uniform,
    #[serde(rename = "greedy")]
    Greedy,
}

impl SweepLearner {
    fn name(self) -> &'static str {
        match self {
            SweepLearner::FairE3 => "fair-e3",
            SweepLearner::Uniform => "uniform",
            SweepLearner::Greedy => "greedy",
        }
    }
}

fn default_format() -> String {
    "csv".into()
}

#[derive(Deserialize, Debug)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub instance: Instance,
    #[serde(default)]
    pub learner: SweepLearner,
    #[serde(default)]
    pub config: Map<String, Value>,
    pub seeds: u64,
    #[serde(default)]
    pub root_seed: u64,
    #[serde(rename = "T")]
    pub steps: usize,
    pub output: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: String,
    pub grid: BTreeMap<String, Vec<Value>>,
}

/// One grid cell after merging the base settings with the cell's values.
#[derive(Deserialize, Debug)]
struct CellParams {
    n: Option<usize>,
    k: Option<usize>,
    x: Option<f64>,
    gamma: Option<f64>,
    #[serde(rename = "T")]
    steps: usize,
    #[serde(flatten)]
    run: RunSpec,
}

#[derive(Debug, Clone)]
pub struct Cell {
    pub key: String,
    pub values: Map<String, Value>,
}

/// Cartesian product of the grid in key order, the last key varying fastest.
pub fn expand_grid(grid: &BTreeMap<String, Vec<Value>>) -> anyhow::Result<Vec<Cell>> {
    anyhow::ensure!(!grid.is_empty(), "grid is empty");
    for (key, values) in grid {
        anyhow::ensure!(
            GRID_KEYS.contains(&key.as_str()),
            "grid key '{key}' is not one of {GRID_KEYS:?}"
        );
        anyhow::ensure!(!values.is_empty(), "grid key '{key}' has no values");
    }
    let mut cells = vec![Map::new()];
    for (key, values) in grid {
        cells = cells
            .into_iter()
            .flat_map(|c| {
                values.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(key.clone(), v.clone());
                    c
                })
            })
            .collect();
    }
    Ok(cells
        .into_iter()
        .map(|values| {
            let key = values
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            Cell { key, values }
        })
        .collect())
}

fn cell_instance(base: &Instance, p: &CellParams, file_model: Option<&Mdp>) -> anyhow::Result<Mdp> {
    match base {
        Instance::Chain { n, k, x, gamma } => {
            let spec = ChainSpec::new(
                p.n.unwrap_or(*n),
                p.k.unwrap_or(*k),
                p.x.unwrap_or(*x),
                p.gamma.unwrap_or(*gamma),
            )?;
            chain_mdp(&spec)
        }
        Instance::File(_) => {
            anyhow::ensure!(
                p.n.is_none() && p.k.is_none() && p.x.is_none(),
                "n, k and x can only vary for chain instances"
            );
            let m = file_model.expect("file instance loaded");
            Ok(match p.gamma {
                Some(g) => m.with_gamma(g)?,
                None => m.clone(),
            })
        }
    }
}

fn baseline_row(
    m: &Mdp,
    learner: SweepLearner,
    spec: &RunSpec,
    steps: usize,
    seeds: &[u64],
) -> anyhow::Result<Vec<String>> {
    let (vstar, qstar) = value_iteration(m, 1e-10)?;
    let mustar = stationary_distribution(m, &fair_optimal_policy(m, &qstar, spec.tie_tol)?, 1e-12)?;
    let results: Vec<(f64, bool)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut agent: Box<dyn Learner> = match learner {
                SweepLearner::Greedy => Box::new(baseline_greedy_e3(m.n(), m.k(), m.gamma())?),
                _ => Box::new(baseline_uniform(m.k())),
            };
            let trace = simulate(m, &mut agent, 0, steps, seed)?;
            let gap = epsilon_optimality_gap(&trace, &vstar, &mustar)?;
            let report = audit_action(&trace, &qstar, spec.alpha, spec.tie_tol)?;
            Ok((gap, report.passed()))
        })
        .collect::<anyhow::Result<_>>()?;
    let mut gaps: Vec<f64> = results.iter().map(|r| r.0).collect();
    let failures = results.iter().filter(|r| !r.1).count();
    Ok(vec![
        median(&mut gaps).to_string(),
        gaps.iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .to_string(),
        ((seeds.len() - failures) as f64 / seeds.len() as f64).to_string(),
        delta_compliant(failures, seeds.len(), spec.delta).to_string(),
        String::new(),
    ])
}

fn run_cell(
    cfg: &SweepConfig,
    cell: &Cell,
    file_model: Option<&Mdp>,
) -> anyhow::Result<Vec<String>> {
    let mut merged = cfg.config.clone();
    merged.insert("T".into(), Value::from(cfg.steps));
    for (k, v) in &cell.values {
        merged.insert(k.clone(), v.clone());
    }
    let params: CellParams = serde_json::from_value(Value::Object(merged))
        .map_err(|e| anyhow::anyhow!("cell {}: {e}", cell.key))?;
    let m = cell_instance(&cfg.instance, &params, file_model)?;
    let seeds = derive_seeds(cfg.root_seed, cfg.seeds);
    let stats = match cfg.learner {
        SweepLearner::FairE3 => {
            let run_cfg = params.run.build(&m)?;
            let runs = run_seeds(&m, &run_cfg, params.steps, &seeds)?;
            let s = summarize(&runs, params.run.delta);
            vec![
                s.median_gap.to_string(),
                s.max_gap.to_string(),
                s.audit_pass_rate.to_string(),
                s.delta_compliant.to_string(),
                s.mean_known_final.to_string(),
            ]
        }
        other => baseline_row(&m, other, &params.run, params.steps, &seeds)?,
    };
    let mut row = vec![
        cell.key.clone(),
        cfg.learner.name().to_string(),
        cfg.seeds.to_string(),
        params.steps.to_string(),
    ];
    row.extend(stats);
    Ok(row)
}

/// Rows of an earlier run keyed by cell key; a missing file yields none.
fn read_existing(path: &Path) -> anyhow::Result<HashMap<String, Vec<String>>> {
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    anyhow::ensure!(
        header == HEADER,
        "{} has different columns; move it away to start over",
        path.display()
    );
    let mut rows = HashMap::new();
    for record in reader.records() {
        let record: Vec<String> = record?.iter().map(str::to_string).collect();
        rows.insert(record[0].clone(), record);
    }
    Ok(rows)
}

fn write_rows(
    path: &Path,
    cells: &[Cell],
    done: &HashMap<String, Vec<String>>,
    no_timestamp: bool,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER)?;
    for cell in cells {
        if let Some(row) = done.get(&cell.key) {
            w.write_record(row)?;
        }
    }
    let mut text = csv_preamble(no_timestamp);
    text.push_str(&String::from_utf8(w.into_inner()?)?);
    let tmp = path.with_extension("csv.tmp");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// JSON sweep config.
    pub config: PathBuf,
    /// Overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub no_timestamp: bool,
    #[arg(long, env = "FAIR_MDP_JOBS")]
    pub jobs: Option<usize>,
}

pub fn run(args: SweepArgs) -> Result<ExitCode, CliError> {
    let text = fs::read_to_string(&args.config)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.config.display()))?;
    let cfg: SweepConfig = serde_json::from_str(&text)
        .map_err(|e| anyhow::anyhow!("{}: {e}", args.config.display()))?;
    anyhow::ensure!(
        cfg.format == "csv",
        "unsupported format '{}' (csv)",
        cfg.format
    );
    anyhow::ensure!(cfg.seeds >= 1, "seeds must be at least 1");
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| anyhow::anyhow!("no output path: set `output` or pass --out"))?;
    let cells = expand_grid(&cfg.grid)?;
    let file_model = match &cfg.instance {
        Instance::File(p) => Some(load_mdp(p)?),
        Instance::Chain { .. } => None,
    };
    let done = Mutex::new(read_existing(&out)?);
    let missing: Vec<&Cell> = {
        let d = done.lock().expect("lock");
        cells.iter().filter(|c| !d.contains_key(&c.key)).collect()
    };
    eprintln!("{} cells, {} to run", cells.len(), missing.len());
    let pool = thread_pool(args.jobs.unwrap_or_else(default_jobs))?;
    pool.install(|| {
        missing
            .par_iter()
            .try_for_each(|cell| -> anyhow::Result<()> {
                let row = run_cell(&cfg, cell, file_model.as_ref())?;
                let mut d = done.lock().expect("lock");
                d.insert(cell.key.clone(), row);
                write_rows(&out, &cells, &d, args.no_timestamp)
            })
    })?;
    write_rows(
        &out,
        &cells,
        &done.into_inner().expect("lock"),
        args.no_timestamp,
    )?;
    Ok(ExitCode::SUCCESS)
}
