use crate::error::{Error, Result};
use crate::estimation::{empirical_model_unchecked, KnownModel, Thresholds};
use crate::induced::{build_exploitation, build_exploration, InducedMdp};
use crate::planning::{value_iteration, DEFAULT_PLAN_TOL};
use crate::policy::{Learner, Transition, UniformLearner};

/// Uniform play in every state.
pub fn baseline_uniform(k: usize) -> UniformLearner {
    UniformLearner::new(k)
}

/// Unfair contrast learner. It first tries every action of the current
/// state `tries` times, least-tried first. Once a state is mapped it plays
/// deterministically: toward unmapped states if any can be reached in the
/// empirical model, else greedily for reward. No fairness restriction.
#[derive(Debug)]
pub struct GreedyE3 {
    k: usize,
    gamma: f64,
    tries: u64,
    counts: KnownModel,
    error: Option<Error>,
}

pub fn baseline_greedy_e3(n: usize, k: usize, gamma: f64) -> Result<GreedyE3> {
    GreedyE3::new(n, k, gamma, 1)
}

/// Exploration values below this count as "no unmapped state reachable".
const ESCAPE_EPS: f64 = 1e-12;

impl GreedyE3 {
    pub fn new(n: usize, k: usize, gamma: f64, tries: u64) -> Result<Self> {
        if tries == 0 {
            return Err(Error::InvalidParameter("tries must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {gamma} outside [0, 1)"
            )));
        }
        Ok(GreedyE3 {
            k,
            gamma,
            tries,
            counts: KnownModel::new(n, k, 1, Thresholds::override_mq(u64::MAX)?)?,
            error: None,
        })
    }

    fn one_hot(&self, a: usize) -> Vec<f64> {
        let mut d = vec![0.0; self.k];
        d[a] = 1.0;
        d
    }

    fn greedy_action(induced: &InducedMdp, s: usize) -> Result<(usize, f64)> {
        let (v, q) = value_iteration(&induced.mdp, DEFAULT_PLAN_TOL)?;
        let local = induced.local(s).expect("mapped state");
        let all: Vec<usize> = (0..induced.mdp.k()).collect();
        Ok((q.greedy_among(local, &all, 1e-9), v.get(local)))
    }

    fn choose(&self, s: usize) -> Result<usize> {
        let least = (0..self.k)
            .min_by_key(|&a| self.counts.visits(s, a))
            .expect("k >= 1");
        if self.counts.visits(s, least) < self.tries {
            return Ok(least);
        }
        let mapped: Vec<usize> = (0..self.counts.n())
            .filter(|&x| (0..self.k).all(|a| self.counts.visits(x, a) >= self.tries))
            .collect();
        let em = empirical_model_unchecked(&self.counts);
        if mapped.len() < self.counts.n() {
            let explore = build_exploration(&em, &mapped, self.gamma)?;
            let (a, value) = Self::greedy_action(&explore, s)?;
            if value > ESCAPE_EPS {
                return Ok(a);
            }
        }
        let exploit = build_exploitation(&em, &mapped, self.gamma)?;
        Ok(Self::greedy_action(&exploit, s)?.0)
    }
}

impl Learner for GreedyE3 {
    fn act(&mut self, state: usize) -> Vec<f64> {
        match self.choose(state) {
            Ok(a) => self.one_hot(a),
            Err(e) => {
                self.error = Some(e);
                self.one_hot(0)
            }
        }
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        self.counts.record_transition(tr)
    }
}
