//! The chain family `M(x)` used for the lower bounds, its closed-form
//! oracles, and the first-arrival coupling experiment.
//!
//! In every state the last action index advances to `s_{min(i+1, n)}` and
//! every other action resets to `s_1`. Rewards are 0.5 everywhere except the
//! terminal state, which pays `x`. All transitions are deterministic.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{sample_index, Mdp, RewardDist};
use crate::planning::ValueTable;
use crate::policy::{Learner, Transition};
use crate::sim::rng_from_seed;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSpec {
    pub n: usize,
    pub k: usize,
    pub x: f64,
    pub gamma: f64,
}

impl ChainSpec {
    pub fn new(n: usize, k: usize, x: f64, gamma: f64) -> Result<Self> {
        let spec = ChainSpec { n, k, x, gamma };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.k < 2 {
            return Err(Error::InvalidParameter(format!(
                "chain needs n >= 2 and k >= 2, got n = {}, k = {}",
                self.n, self.k
            )));
        }
        if !(0.0..=1.0).contains(&self.x) {
            return Err(Error::InvalidParameter(format!(
                "terminal reward x = {} outside [0, 1]",
                self.x
            )));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParameter(format!(
                "gamma = {} outside [0, 1)",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Index of the advancing action.
    pub fn advance(&self) -> usize {
        self.k - 1
    }

    pub fn terminal(&self) -> usize {
        self.n - 1
    }
}

pub fn make_chain(spec: &ChainSpec) -> Result<Mdp> {
    spec.validate()?;
    let (n, k) = (spec.n, spec.k);
    let mut p = vec![0.0; n * k * n];
    for s in 0..n {
        for a in 0..k {
            let next = if a == spec.advance() {
                (s + 1).min(n - 1)
            } else {
                0
            };
            p[(s * k + a) * n + next] = 1.0;
        }
    }
    let mut rewards = vec![RewardDist::PointMass(0.5); n];
    rewards[n - 1] = RewardDist::PointMass(spec.x);
    Mdp::new(n, k, spec.gamma, p, rewards)
}

/// Exact optimal values when advancing is optimal (`x >= 0.5`):
/// `V*(s_i) = 0.5 (1 - g^(n-i)) / (1 - g) + x g^(n-i) / (1 - g)`.
pub fn chain_vstar(spec: &ChainSpec) -> Result<ValueTable> {
    spec.validate()?;
    if spec.x < 0.5 {
        return Err(Error::InvalidParameter(format!(
            "closed form needs x >= 0.5, got {}; use value iteration",
            spec.x
        )));
    }
    let g = spec.gamma;
    let values = (1..=spec.n)
        .map(|i| {
            let tail = g.powi((spec.n - i) as i32);
            0.5 * (1.0 - tail) / (1.0 - g) + spec.x * tail / (1.0 - g)
        })
        .collect();
    Ok(ValueTable(values))
}

/// Upper bound `(1 + 2 g^(n-i+1)) / (2 (1 - g))` on `V*(s_i)` for `x = 1`
/// (1-based `i`).
pub fn vstar_upper_bound(spec: &ChainSpec, i: usize) -> f64 {
    let g = spec.gamma;
    (1.0 + 2.0 * g.powi((spec.n - i + 1) as i32)) / (2.0 * (1.0 - g))
}

/// Expected steps for uniform play to first reach `s_n` from `s_1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HittingTime {
    pub value: f64,
    /// Integer value when it fits in `u128`.
    pub exact: Option<u128>,
}

/// Closed form `(k^n - k) / (k - 1)`.
pub fn chain_hitting_time(n: usize, k: usize) -> Result<HittingTime> {
    if n < 2 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 2 and k >= 2, got n = {n}, k = {k}"
        )));
    }
    let exact = u32::try_from(n)
        .ok()
        .and_then(|e| (k as u128).checked_pow(e))
        .map(|kn| (kn - k as u128) / (k as u128 - 1));
    let value = match exact {
        Some(v) => v as f64,
        None => ((k as f64).powi(n as i32) - k as f64) / (k as f64 - 1.0),
    };
    Ok(HittingTime { value, exact })
}

/// Solves `E_i = 1 + (1 - 1/k) E_1 + (1/k) E_{i+1}`, `E_n = 0`, by back
/// substitution with `E_i = a_i + b_i E_1`.
pub fn hitting_time_recurrence(n: usize, k: usize) -> Result<f64> {
    if n < 2 || k < 2 {
        return Err(Error::InvalidParameter(format!(
            "need n >= 2 and k >= 2, got n = {n}, k = {k}"
        )));
    }
    let stay = 1.0 / k as f64;
    // `c` tracks `1 - b_i`, which obeys `c_i = stay c_{i+1}` without cancellation.
    let (mut a, mut c) = (0.0, 1.0);
    for _ in 1..n {
        a = 1.0 + stay * a;
        c *= stay;
    }
    Ok(a / c)
}

/// Chain length used for the approximate-action lower bound:
/// `ceil(ln(1 / (2 alpha)) / (1 - gamma))`.
pub fn action_fair_chain_length(alpha: f64, gamma: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 0.5) || !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < alpha < 1/2 and gamma in [0, 1), got alpha = {alpha}, gamma = {gamma}"
        )));
    }
    Ok(((1.0 / (2.0 * alpha)).ln() / (1.0 - gamma)).ceil() as usize)
}

/// Plays the advancing action with probability `1/k + alpha (k-1)/k` and
/// splits the rest evenly, the largest bias an alpha-choice fair learner can
/// show while every action still looks equally good.
#[derive(Clone, Debug)]
pub struct ChoiceFairLearner {
    k: usize,
    alpha: f64,
}

impl ChoiceFairLearner {
    pub fn new(k: usize, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) || k < 2 {
            return Err(Error::InvalidParameter(format!(
                "need k >= 2 and alpha in [0, 1], got {k}, {alpha}"
            )));
        }
        Ok(ChoiceFairLearner { k, alpha })
    }

    pub fn advance_probability(&self) -> f64 {
        1.0 / self.k as f64 + self.alpha * (self.k - 1) as f64 / self.k as f64
    }
}

impl Learner for ChoiceFairLearner {
    fn act(&mut self, _state: usize) -> Vec<f64> {
        let adv = self.advance_probability();
        let other = (1.0 - adv) / (self.k - 1) as f64;
        let mut dist = vec![other; self.k];
        dist[self.k - 1] = adv;
        dist
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub seed: u64,
    /// Steps until the first arrival at `s_n`, or `t_cap` when censored.
    pub steps_to_reach_sn: u64,
    pub censored: bool,
    pub distinguished: bool,
}

/// Runs one learner per seed on `M(x)` from `s_1` and records the first
/// arrival at `s_n`. The seed fixes all of the learner's randomness, so the
/// same seed yields the same path on `M(0.5)` and `M(1)` until `s_n`.
pub fn coupling_experiment<L, F>(
    spec: &ChainSpec,
    factory: F,
    seeds: &[u64],
    t_cap: u64,
) -> Result<Vec<HitRecord>>
where
    L: Learner,
    F: Fn(u64) -> L + Sync,
{
    if t_cap == 0 {
        return Err(Error::InvalidParameter("t_cap must be at least 1".into()));
    }
    let m = make_chain(spec)?;
    let terminal = spec.terminal();
    seeds
        .par_iter()
        .map(|&seed| {
            let mut learner = factory(seed);
            let mut rng = rng_from_seed(seed);
            let mut state = 0;
            for t in 1..=t_cap {
                let dist = learner.act(state);
                let action = sample_index(&dist, rand::Rng::gen::<f64>(&mut rng));
                let next_state = sample_index(m.row(state, action), 0.0);
                learner.observe(&Transition {
                    state,
                    action,
                    reward: m.mean_reward(state),
                    next_state,
                })?;
                state = next_state;
                if state == terminal {
                    return Ok(HitRecord {
                        seed,
                        steps_to_reach_sn: t,
                        censored: false,
                        distinguished: true,
                    });
                }
            }
            Ok(HitRecord {
                seed,
                steps_to_reach_sn: t_cap,
                censored: true,
                distinguished: false,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::UniformLearner;

    #[test]
    fn chain_structure() {
        let m = make_chain(&ChainSpec::new(3, 4, 1.0, 0.9).unwrap()).unwrap();
        for s in 0..3 {
            for a in 0..3 {
                assert_eq!(m.prob(s, a, 0), 1.0);
            }
            assert_eq!(m.prob(s, 3, (s + 1).min(2)), 1.0);
        }
        assert_eq!(m.mean_rewards(), vec![0.5, 0.5, 1.0]);
    }

    #[test]
    fn smallest_chain_has_constant_rewards() {
        let m = make_chain(&ChainSpec::new(2, 2, 0.5, 0.9).unwrap()).unwrap();
        assert_eq!(m.mean_rewards(), vec![0.5, 0.5]);
    }

    #[test]
    fn invalid_specs() {
        assert!(ChainSpec::new(1, 2, 1.0, 0.9).is_err());
        assert!(ChainSpec::new(3, 1, 1.0, 0.9).is_err());
        assert!(ChainSpec::new(3, 2, 1.5, 0.9).is_err());
        assert!(chain_vstar(&ChainSpec::new(3, 2, 0.2, 0.9).unwrap()).is_err());
    }

    #[test]
    fn hitting_times_small() {
        assert_eq!(chain_hitting_time(2, 2).unwrap().exact, Some(2));
        assert_eq!(chain_hitting_time(3, 2).unwrap().exact, Some(6));
        assert_eq!(chain_hitting_time(4, 2).unwrap().exact, Some(14));
        assert_eq!(chain_hitting_time(3, 3).unwrap().exact, Some(12));
        let huge = chain_hitting_time(200, 3).unwrap();
        assert!(huge.exact.is_none() && huge.value > 1e90);
    }

    #[test]
    fn choice_fair_bias() {
        let mut l = ChoiceFairLearner::new(2, 0.2).unwrap();
        let d = l.act(0);
        assert!((d[1] - d[0] - 0.2).abs() < 1e-12);
        let mut l3 = ChoiceFairLearner::new(3, 0.3).unwrap();
        let d3 = l3.act(0);
        assert!((d3.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((d3[2] - d3[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn cap_of_one_censors_longer_chains() {
        let spec = ChainSpec::new(3, 2, 1.0, 0.9).unwrap();
        let seeds: Vec<u64> = (0..50).collect();
        let recs = coupling_experiment(&spec, |_| UniformLearner::new(2), &seeds, 1).unwrap();
        assert!(recs
            .iter()
            .all(|r| r.censored && !r.distinguished && r.steps_to_reach_sn == 1));
        assert!(coupling_experiment(&spec, |_| UniformLearner::new(2), &seeds, 0).is_err());
    }

    #[test]
    fn lower_bound_chain_length() {
        // ln(1/(2 * 0.1)) / 0.1 = 16.09...
        assert_eq!(action_fair_chain_length(0.1, 0.9).unwrap(), 17);
        assert!(action_fair_chain_length(0.6, 0.9).is_err());
    }
}
