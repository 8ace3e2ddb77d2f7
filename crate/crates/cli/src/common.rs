use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use fair_mdp::chain::{make_chain, ChainSpec};
use fair_mdp::sim::split_seed;
use fair_mdp::Mdp;

pub type CliError = anyhow::Error;

pub const SCHEMA_LINE: &str = "# fair-mdp schema v1";

/// `count` seeds derived from `root` by the documented splitting rule.
pub fn derive_seeds(root: u64, count: u64) -> Vec<u64> {
    (0..count).map(|i| split_seed(root, i)).collect()
}

/// Parses `a..b` (inclusive) or a single integer.
pub fn parse_range(text: &str) -> anyhow::Result<(usize, usize)> {
    let (lo, hi) = match text.split_once("..") {
        Some((a, b)) => (a.trim().parse()?, b.trim().trim_start_matches('=').parse()?),
        None => {
            let v = text.trim().parse()?;
            (v, v)
        }
    };
    anyhow::ensure!(lo <= hi, "empty range {text}");
    Ok((lo, hi))
}

/// Parses `n=3,k=2,x=1,gamma=0.9` into a chain spec; `x` defaults to 1.
pub fn parse_chain(text: &str) -> anyhow::Result<ChainSpec> {
    let (mut n, mut k, mut x, mut gamma) = (None, Some(2), Some(1.0), None);
    for part in text.split(',').filter(|p| !p.trim().is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| anyhow::anyhow!("chain field '{part}' is not key=value"))?;
        match key.trim() {
            "n" => n = Some(value.trim().parse()?),
            "k" => k = Some(value.trim().parse()?),
            "x" => x = Some(value.trim().parse()?),
            "gamma" => gamma = Some(value.trim().parse()?),
            other => anyhow::bail!("unknown chain field '{other}'"),
        }
    }
    let spec = ChainSpec::new(
        n.ok_or_else(|| anyhow::anyhow!("chain spec needs n"))?,
        k.unwrap_or(2),
        x.unwrap_or(1.0),
        gamma.ok_or_else(|| anyhow::anyhow!("chain spec needs gamma"))?,
    )?;
    Ok(spec)
}

pub fn load_mdp(path: &Path) -> anyhow::Result<Mdp> {
    Mdp::load(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

pub fn chain_mdp(spec: &ChainSpec) -> anyhow::Result<Mdp> {
    Ok(make_chain(spec)?)
}

/// Schema line, optional timestamp line, then the CSV body.
pub fn csv_preamble(no_timestamp: bool) -> String {
    let mut s = format!("{SCHEMA_LINE}\n");
    if !no_timestamp {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        s.push_str(&format!("# generated-unix {secs}\n"));
    }
    s
}

/// Writes `text` to `path`, or to stdout when no path is given.
pub fn emit(path: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(|a, b| a.total_cmp(b));
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    }
}

pub fn thread_pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    anyhow::ensure!(jobs >= 1, "--jobs must be at least 1");
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

pub fn default_jobs() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..4").unwrap(), (2, 4));
        assert_eq!(parse_range("5").unwrap(), (5, 5));
        assert!(parse_range("4..2").is_err());
    }

    #[test]
    fn chain_specs() {
        let s = parse_chain("n=3,k=2,x=0.5,gamma=0.9").unwrap();
        assert_eq!((s.n, s.k, s.x, s.gamma), (3, 2, 0.5, 0.9));
        assert!(parse_chain("n=1,gamma=0.9").is_err());
        assert!(parse_chain("n=3").is_err());
    }

    #[test]
    fn medians() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
