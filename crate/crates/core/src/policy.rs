use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for a committed action distribution to count as a probability vector.
pub const DIST_TOL: f64 = 1e-12;

/// One observed step of interaction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

/// A (possibly history-dependent) decision maker.
///
/// `act` must commit to a full distribution over actions before the action
/// is drawn. Sampling is done by the caller, so the committed distribution
/// is what fairness audits inspect.
pub trait Learner {
    fn act(&mut self, state: usize) -> Vec<f64>;

    fn observe(&mut self, _transition: &Transition) -> Result<()> {
        Ok(())
    }
}

impl<L: Learner + ?Sized> Learner for Box<L> {
    fn act(&mut self, state: usize) -> Vec<f64> {
        (**self).act(state)
    }

    fn observe(&mut self, transition: &Transition) -> Result<()> {
        (**self).observe(transition)
    }
}

pub fn check_distribution(dist: &[f64], k: usize) -> std::result::Result<(), String> {
    if dist.len() != k {
        return Err(format!("length {} but {k} actions", dist.len()));
    }
    if let Some(p) = dist.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(format!("entry {p} is not a probability"));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > DIST_TOL * k as f64 {
        return Err(format!("sums to {sum}"));
    }
    Ok(())
}

/// Stationary stochastic policy, one action distribution per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticPolicy {
    n: usize,
    k: usize,
    dist: Vec<f64>,
}

impl StochasticPolicy {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if n == 0 || k == 0 {
            return Err(Error::InvalidParameter(
                "policy needs at least one state and action".into(),
            ));
        }
        let mut dist = Vec::with_capacity(n * k);
        for (s, row) in rows.into_iter().enumerate() {
            check_distribution(&row, k)
                .map_err(|reason| Error::InvalidParameter(format!("policy row {s}: {reason}")))?;
            dist.extend(row);
        }
        Ok(StochasticPolicy { n, k, dist })
    }

    pub fn uniform(n: usize, k: usize) -> Self {
        StochasticPolicy {
            n,
            k,
            dist: vec![1.0 / k as f64; n * k],
        }
    }

    pub fn deterministic(actions: &[usize], k: usize) -> Self {
        let n = actions.len();
        let mut dist = vec![0.0; n * k];
        for (s, &a) in actions.iter().enumerate() {
            dist[s * k + a] = 1.0;
        }
        StochasticPolicy { n, k, dist }
    }

    /// Uniform over the given action subset in each state.
    pub fn uniform_over(sets: &[Vec<usize>], k: usize) -> Self {
        let n = sets.len();
        let mut dist = vec![0.0; n * k];
        for (s, set) in sets.iter().enumerate() {
            let w = 1.0 / set.len() as f64;
            for &a in set {
                dist[s * k + a] = w;
            }
        }
        StochasticPolicy { n, k, dist }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.dist[s * self.k..(s + 1) * self.k]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.dist[s * self.k + a]
    }

    /// The action taken with probability one, if the row is deterministic.
    pub fn deterministic_action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn support(&self, s: usize) -> Vec<usize> {
        self.row(s)
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(|(a, _)| a)
            .collect()
    }
}

impl Learner for StochasticPolicy {
    fn act(&mut self, state: usize) -> Vec<f64> {
        self.row(state).to_vec()
    }
}

/// Plays every action with equal probability regardless of history.
#[derive(Clone, Debug)]
pub struct UniformLearner {
    k: usize,
}

impl UniformLearner {
    pub fn new(k: usize) -> Self {
        UniformLearner { k }
    }
}

impl Learner for UniformLearner {
    fn act(&mut self, _state: usize) -> Vec<f64> {
        vec![1.0 / self.k as f64; self.k]
    }
}
