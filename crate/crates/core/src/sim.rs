//! Interaction loop, audited traces, and the visited-state performance metric.
//!
//! Seeding: a run's RNG is `ChaCha8Rng::seed_from_u64(seed)`. Sweeps derive
//! per-run seeds with [`split_seed`], i.e. `root ^ index`, which then goes
//! through the same seed function.

use std::io::{BufRead, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{stationary_distribution, StationaryDist};
use crate::mdp::{sample_index, Mdp};
use crate::planning::{policy_evaluation, ValueTable};
use crate::policy::{check_distribution, Learner, StochasticPolicy, Transition};

pub type SimRng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Seed of run `index` under root seed `root`.
pub fn split_seed(root: u64, index: u64) -> u64 {
    root ^ index
}

/// One audited step: the state, the distribution the learner committed to,
/// the sampled action and the realized reward.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceStep {
    pub t: usize,
    pub state: usize,
    pub dist: Vec<f64>,
    pub action: usize,
    pub reward: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub steps: Vec<TraceStep>,
    pub seed: Option<u64>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn states(&self) -> impl Iterator<Item = usize> + '_ {
        self.steps.iter().map(|s| s.state)
    }

    /// JSON lines, one step per line: `{t, state, dist, action, reward}`.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for step in &self.steps {
            serde_json::to_writer(&mut out, step)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut steps = Vec::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let step: TraceStep = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidParameter(format!("trace line {}: {e}", i + 1)))?;
            steps.push(step);
        }
        Ok(Trace { steps, seed: None })
    }
}

/// Runs `agent` on `m` for `steps` steps from `start`.
///
/// The agent commits to a distribution, the simulator samples the action,
/// then the reward and the next state, and feeds the transition back.
pub fn simulate<L: Learner + ?Sized>(
    m: &Mdp,
    agent: &mut L,
    start: usize,
    steps: usize,
    seed: u64,
) -> Result<Trace> {
    if steps == 0 {
        return Err(Error::InvalidParameter(
            "simulation needs at least one step".into(),
        ));
    }
    if start >= m.n() {
        return Err(Error::InvalidParameter(format!(
            "start state {start} out of range"
        )));
    }
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(steps);
    let mut state = start;
    for t in 0..steps {
        let tr = step_once(m, agent, state, t, &mut rng, |dist, action, reward| {
            out.push(TraceStep {
                t,
                state,
                dist,
                action,
                reward,
            })
        })?;
        state = tr.next_state;
    }
    Ok(Trace {
        steps: out,
        seed: Some(seed),
    })
}

/// One interaction step. `record` receives the committed distribution.
pub fn step_once<L, R, F>(
    m: &Mdp,
    agent: &mut L,
    state: usize,
    t: usize,
    rng: &mut R,
    record: F,
) -> Result<Transition>
where
    L: Learner + ?Sized,
    R: Rng + ?Sized,
    F: FnOnce(Vec<f64>, usize, f64),
{
    let dist = agent.act(state);
    check_distribution(&dist, m.k())
        .map_err(|reason| Error::InvalidDistribution { step: t, reason })?;
    let action = sample_index(&dist, rng.gen::<f64>());
    let reward = m.reward(state).sample(rng);
    let next_state = sample_index(m.row(state, action), rng.gen::<f64>());
    let tr = Transition {
        state,
        action,
        reward,
        next_state,
    };
    record(dist, action, reward);
    agent.observe(&tr)?;
    Ok(tr)
}

/// `E_{s ~ mu*}[V*(s)] - (1/T) sum_t V*(s_t)` over the visited states.
pub fn epsilon_optimality_gap(
    trace: &Trace,
    vstar: &ValueTable,
    mustar: &StationaryDist,
) -> Result<f64> {
    if trace.is_empty() {
        return Err(Error::InvalidParameter("empty trace".into()));
    }
    if vstar.len() != mustar.0.len() {
        return Err(Error::DimensionMismatch(format!(
            "value table has {} states, stationary distribution {}",
            vstar.len(),
            mustar.0.len()
        )));
    }
    if let Some(step) = trace.steps.iter().find(|s| s.state >= vstar.len()) {
        return Err(Error::DimensionMismatch(format!(
            "trace visits state {} but tables have {} states",
            step.state,
            vstar.len()
        )));
    }
    let target = vstar.expect(mustar.as_slice());
    let visited: f64 = trace.states().map(|s| vstar.get(s)).sum::<f64>() / trace.len() as f64;
    Ok(target - visited)
}

/// `|mu^pi . R - (1 - gamma) mu^pi . V^pi|`, zero up to numerical error.
pub fn satinder_residual(m: &Mdp, pi: &StochasticPolicy, tol: f64) -> Result<f64> {
    let mu = stationary_distribution(m, pi, tol)?;
    let (v, _) = policy_evaluation(m, pi, tol)?;
    let reward_rate: f64 = m
        .mean_rewards()
        .iter()
        .zip(mu.as_slice())
        .map(|(r, p)| r * p)
        .sum();
    Ok((reward_rate - (1.0 - m.gamma()) * v.expect(mu.as_slice())).abs())
}
