//! Exact dynamic-programming planners.
//!
//! Bellman backup: `Q(s,a) = R(s) + gamma * sum_s' P(s,a,s') V(s')` and
//! `V(s) = max_a Q(s,a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::StochasticPolicy;

pub const DEFAULT_PLAN_TOL: f64 = 1e-9;
const MAX_SWEEPS: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueTable(pub Vec<f64>);

impl ValueTable {
    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Expectation under a state distribution.
    pub fn expect(&self, dist: &[f64]) -> f64 {
        self.0.iter().zip(dist).map(|(v, p)| v * p).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    n: usize,
    k: usize,
    q: Vec<f64>,
}

impl QTable {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::DimensionMismatch("ragged Q table".into()));
        }
        Ok(QTable {
            n,
            k,
            q: rows.into_iter().flatten().collect(),
        })
    }

    pub fn filled(n: usize, k: usize, value: f64) -> Self {
        QTable {
            n,
            k,
            q: vec![value; n * k],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.k + a]
    }

    pub fn set(&mut self, s: usize, a: usize, value: f64) {
        self.q[s * self.k + a] = value;
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.q[s * self.k..(s + 1) * self.k]
    }

    pub fn max(&self, s: usize) -> f64 {
        self.row(s)
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Actions within `tol` of the best value in `s`, in index order.
    pub fn argmax_set(&self, s: usize, tol: f64) -> Vec<usize> {
        let best = self.max(s);
        (0..self.k)
            .filter(|&a| self.get(s, a) >= best - tol)
            .collect()
    }

    /// Best action in `s` among `allowed`, lowest index on ties at `tol`.
    pub fn greedy_among(&self, s: usize, allowed: &[usize], tol: f64) -> usize {
        let best = allowed
            .iter()
            .map(|&a| self.get(s, a))
            .fold(f64::NEG_INFINITY, f64::max);
        *allowed
            .iter()
            .find(|&&a| self.get(s, a) >= best - tol)
            .expect("allowed set is nonempty")
    }

    /// Deterministic greedy policy, lowest index on ties at `tol`.
    pub fn greedy_policy(&self, tol: f64) -> StochasticPolicy {
        let all: Vec<usize> = (0..self.k).collect();
        let actions: Vec<usize> = (0..self.n)
            .map(|s| self.greedy_among(s, &all, tol))
            .collect();
        StochasticPolicy::deterministic(&actions, self.k)
    }
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "tolerance {tol} must be positive"
        )))
    }
}

fn backup(m: &Mdp, v: &[f64], s: usize, a: usize) -> f64 {
    let ev: f64 = m.row(s, a).iter().zip(v).map(|(p, x)| p * x).sum();
    m.mean_reward(s) + m.gamma() * ev
}

fn stop_threshold(gamma: f64, tol: f64) -> f64 {
    if gamma == 0.0 {
        f64::INFINITY
    } else {
        tol * (1.0 - gamma) / (2.0 * gamma)
    }
}

fn q_from_values(m: &Mdp, v: &[f64]) -> QTable {
    let mut q = QTable::filled(m.n(), m.k(), 0.0);
    for s in 0..m.n() {
        for a in 0..m.k() {
            q.set(s, a, backup(m, v, s, a));
        }
    }
    q
}

/// Optimal values by value iteration; the returned `V` is `max_a Q` exactly.
pub fn value_iteration(m: &Mdp, tol: f64) -> Result<(ValueTable, QTable)> {
    let all: Vec<Vec<usize>> = vec![(0..m.k()).collect(); m.n()];
    value_iteration_restricted(m, &all, tol)
}

/// Value iteration where state `s` may only use the actions in `allowed[s]`.
///
/// The returned Q table still covers every action (one backup of the final
/// values), so callers can compare restricted and unrestricted actions.
pub fn value_iteration_restricted(
    m: &Mdp,
    allowed: &[Vec<usize>],
    tol: f64,
) -> Result<(ValueTable, QTable)> {
    check_tol(tol)?;
    if allowed.len() != m.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} allowed sets for {} states",
            allowed.len(),
            m.n()
        )));
    }
    if let Some(s) = allowed
        .iter()
        .position(|set| set.is_empty() || set.iter().any(|&a| a >= m.k()))
    {
        return Err(Error::InvalidParameter(format!(
            "allowed set of state {s} is empty or out of range"
        )));
    }
    let threshold = stop_threshold(m.gamma(), tol);
    let mut v = vec![0.0; m.n()];
    let mut next = vec![0.0; m.n()];
    for _ in 0..MAX_SWEEPS {
        let mut diff: f64 = 0.0;
        for s in 0..m.n() {
            let best = allowed[s]
                .iter()
                .map(|&a| backup(m, &v, s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            diff = diff.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if diff <= threshold {
            let q = q_from_values(m, &v);
            let values = (0..m.n())
                .map(|s| {
                    allowed[s]
                        .iter()
                        .map(|&a| q.get(s, a))
                        .fold(f64::NEG_INFINITY, f64::max)
                })
                .collect();
            return Ok((ValueTable(values), q));
        }
    }
    Err(Error::NonConvergence(MAX_SWEEPS))
}

pub fn policy_evaluation(m: &Mdp, pi: &StochasticPolicy, tol: f64) -> Result<(ValueTable, QTable)> {
    check_tol(tol)?;
    if pi.n() != m.n() || pi.k() != m.k() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, MDP is {}x{}",
            pi.n(),
            pi.k(),
            m.n(),
            m.k()
        )));
    }
    let threshold = stop_threshold(m.gamma(), tol);
    let mut v = vec![0.0; m.n()];
    let mut next = vec![0.0; m.n()];
    for _ in 0..MAX_SWEEPS {
        let mut diff: f64 = 0.0;
        for s in 0..m.n() {
            let val: f64 = (0..m.k())
                .filter(|&a| pi.prob(s, a) > 0.0)
                .map(|a| pi.prob(s, a) * backup(m, &v, s, a))
                .sum();
            diff = diff.max((val - v[s]).abs());
            next[s] = val;
        }
        std::mem::swap(&mut v, &mut next);
        if diff <= threshold {
            let q = q_from_values(m, &v);
            let values = (0..m.n())
                .map(|s| (0..m.k()).map(|a| pi.prob(s, a) * q.get(s, a)).sum())
                .collect();
            return Ok((ValueTable(values), q));
        }
    }
    Err(Error::NonConvergence(MAX_SWEEPS))
}

/// Sup-norm Bellman optimality residual of `v`.
pub fn bellman_residual(m: &Mdp, v: &ValueTable) -> f64 {
    (0..m.n())
        .map(|s| {
            let best = (0..m.k())
                .map(|a| backup(m, v.as_slice(), s, a))
                .fold(f64::NEG_INFINITY, f64::max);
            (best - v.get(s)).abs()
        })
        .fold(0.0, f64::max)
}

/// Steps after which discounted tails contribute less than `eps`:
/// the ceiling of `log(eps (1 - gamma)) / log(gamma)`.
pub fn horizon_time(eps: f64, gamma: f64) -> Result<u64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} must lie in (0, 1)"
        )));
    }
    let scaled = eps * (1.0 - gamma);
    if !(eps > 0.0 && scaled < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} must satisfy 0 < eps (1 - gamma) < 1"
        )));
    }
    let h = scaled.ln() / gamma.ln();
    // absorb rounding when the formula lands on an integer
    let rounded = h.round();
    let steps = if (h - rounded).abs() < 1e-9 {
        rounded
    } else {
        h.ceil()
    };
    Ok(steps.max(1.0) as u64)
}
