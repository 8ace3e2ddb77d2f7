//! Known-state bookkeeping: sample thresholds, visit counts, the empirical
//! model and plug-in Q estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Mdp, RewardDist, TransitionModel};
use crate::planning::{value_iteration, QTable};
use crate::policy::Transition;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Formula,
    Override,
}

/// Rooted-trajectory counts a state needs before it is known.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub m1: u64,
    pub m2: u64,
    pub mq: u64,
    pub scale: f64,
    pub mode: ThresholdMode,
}

impl Thresholds {
    /// Fixed `mQ`, bypassing the formulas.
    pub fn override_mq(mq: u64) -> Result<Self> {
        if mq == 0 {
            return Err(Error::InvalidParameter(
                "mQ override must be at least 1".into(),
            ));
        }
        Ok(Thresholds {
            m1: mq,
            m2: mq,
            mq,
            scale: 1.0,
            mode: ThresholdMode::Override,
        })
    }
}

fn ceil_saturating(x: f64) -> u64 {
    if x >= u64::MAX as f64 {
        u64::MAX
    } else {
        x.ceil().max(1.0) as u64
    }
}

/// `m1 = scale k^(H+3) n (1/((1-g) alpha))^2 ln(k/delta)`,
/// `m2 = scale (n / min(eps, alpha))^4 H^8 ln(1/delta)`, `mQ = k max(m1, m2)`.
/// All values are rounded up and saturate at `u64::MAX`.
#[allow(clippy::too_many_arguments)]
pub fn known_thresholds(
    n: usize,
    k: usize,
    h: u64,
    alpha: f64,
    eps: f64,
    gamma: f64,
    delta: f64,
    scale: f64,
) -> Result<Thresholds> {
    if n == 0 || k == 0 || h == 0 {
        return Err(Error::InvalidParameter(format!(
            "need n, k, H >= 1, got {n}, {k}, {h}"
        )));
    }
    if !(alpha > 0.0) || !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need alpha, eps > 0, got {alpha}, {eps}"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} outside [0, 1)"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} outside (0, 1)"
        )));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "scale = {scale} must be positive"
        )));
    }
    let (nf, kf, hf) = (n as f64, k as f64, h as f64);
    let inv = 1.0 / ((1.0 - gamma) * alpha);
    let m1 = scale * kf.powf(hf + 3.0) * nf * inv * inv * (kf / delta).ln();
    let m2 = scale * (nf / eps.min(alpha)).powi(4) * hf.powi(8) * (1.0 / delta).ln();
    let (m1, m2) = (ceil_saturating(m1), ceil_saturating(m2));
    Ok(Thresholds {
        m1,
        m2,
        mq: m1.max(m2).saturating_mul(k as u64),
        scale,
        mode: ThresholdMode::Formula,
    })
}

/// The `beta` at which an estimated model is accurate enough for known
/// states: `min(eps, alpha)^2 / (n^2 H^4)`.
pub fn packnown_rate(eps: f64, alpha: f64, n: usize, h: u64) -> f64 {
    let m = eps.min(alpha);
    m * m / ((n * n) as f64 * (h as f64).powi(4))
}

/// Visit statistics and the known set.
///
/// Every recorded transition feeds the empirical model; only trajectories
/// passed to [`KnownModel::record_trajectory`] count toward the known set,
/// credited to their root state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnownModel {
    n: usize,
    k: usize,
    horizon: usize,
    thresholds: Thresholds,
    trajectory_count: Vec<u64>,
    sa_count: Vec<u64>,
    next_count: Vec<u64>,
    reward_count: Vec<u64>,
    reward_sum: Vec<f64>,
    reward_sq: Vec<f64>,
    known: Vec<bool>,
}

impl KnownModel {
    pub fn new(n: usize, k: usize, horizon: usize, thresholds: Thresholds) -> Result<Self> {
        if n == 0 || k == 0 || horizon == 0 {
            return Err(Error::InvalidParameter(format!(
                "need n, k, H >= 1, got {n}, {k}, {horizon}"
            )));
        }
        Ok(KnownModel {
            n,
            k,
            horizon,
            thresholds,
            trajectory_count: vec![0; n],
            sa_count: vec![0; n * k],
            next_count: vec![0; n * k * n],
            reward_count: vec![0; n],
            reward_sum: vec![0.0; n],
            reward_sq: vec![0.0; n],
            known: vec![false; n],
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn thresholds(&self) -> &Thresholds {
        &self.thresholds
    }

    pub fn is_known(&self, s: usize) -> bool {
        self.known[s]
    }

    pub fn known_mask(&self) -> &[bool] {
        &self.known
    }

    /// The known set in increasing state order.
    pub fn gamma_set(&self) -> Vec<usize> {
        (0..self.n).filter(|&s| self.known[s]).collect()
    }

    pub fn known_count(&self) -> usize {
        self.known.iter().filter(|&&b| b).count()
    }

    pub fn trajectory_count(&self, s: usize) -> u64 {
        self.trajectory_count[s]
    }

    pub fn visits(&self, s: usize, a: usize) -> u64 {
        self.sa_count[s * self.k + a]
    }

    pub fn next_counts(&self, s: usize, a: usize) -> &[u64] {
        let i = (s * self.k + a) * self.n;
        &self.next_count[i..i + self.n]
    }

    pub fn reward_samples(&self, s: usize) -> u64 {
        self.reward_count[s]
    }

    /// Sample variance of the rewards observed at `s`, if any.
    pub fn reward_variance(&self, s: usize) -> Option<f64> {
        let c = self.reward_count[s];
        if c < 2 {
            return None;
        }
        let mean = self.reward_sum[s] / c as f64;
        Some(((self.reward_sq[s] - c as f64 * mean * mean) / (c as f64 - 1.0)).max(0.0))
    }

    fn check_transition(&self, tr: &Transition) -> Result<()> {
        if tr.state >= self.n || tr.next_state >= self.n || tr.action >= self.k {
            return Err(Error::MalformedTrajectory(format!(
                "transition ({}, {}, {}) out of range for {} states and {} actions",
                tr.state, tr.action, tr.next_state, self.n, self.k
            )));
        }
        if !(0.0..=1.0).contains(&tr.reward) {
            return Err(Error::MalformedTrajectory(format!(
                "reward {} outside [0, 1]",
                tr.reward
            )));
        }
        Ok(())
    }

    fn count(&mut self, tr: &Transition) {
        let i = tr.state * self.k + tr.action;
        self.sa_count[i] += 1;
        self.next_count[i * self.n + tr.next_state] += 1;
        self.reward_count[tr.state] += 1;
        self.reward_sum[tr.state] += tr.reward;
        self.reward_sq[tr.state] += tr.reward * tr.reward;
    }

    /// Counts one transition taken outside a rooted random trajectory.
    pub fn record_transition(&mut self, tr: &Transition) -> Result<()> {
        self.check_transition(tr)?;
        self.count(tr);
        Ok(())
    }

    /// Ingests one length-`H` random trajectory rooted at its first state and
    /// returns the states that became known.
    pub fn record_trajectory(&mut self, traj: &[Transition]) -> Result<Vec<usize>> {
        if traj.is_empty() {
            return Err(Error::MalformedTrajectory("empty trajectory".into()));
        }
        if traj.len() != self.horizon {
            return Err(Error::MalformedTrajectory(format!(
                "length {} but horizon is {}",
                traj.len(),
                self.horizon
            )));
        }
        for (i, tr) in traj.iter().enumerate() {
            self.check_transition(tr)?;
            if i + 1 < traj.len() && traj[i + 1].state != tr.next_state {
                return Err(Error::MalformedTrajectory(format!(
                    "step {} ends in {} but step {} starts in {}",
                    i,
                    tr.next_state,
                    i + 1,
                    traj[i + 1].state
                )));
            }
        }
        traj.iter().for_each(|tr| self.count(tr));
        let root = traj[0].state;
        self.trajectory_count[root] += 1;
        Ok(self.refresh_known())
    }

    fn refresh_known(&mut self) -> Vec<usize> {
        let mut fresh = Vec::new();
        for s in 0..self.n {
            if !self.known[s] && self.trajectory_count[s] >= self.thresholds.mq {
                self.known[s] = true;
                fresh.push(s);
            }
        }
        fresh
    }

    /// Adds the counts of `other` (same shape and thresholds) and returns the
    /// states that became known.
    pub fn merge(&mut self, other: &KnownModel) -> Result<Vec<usize>> {
        if other.n != self.n || other.k != self.k || other.horizon != self.horizon {
            return Err(Error::DimensionMismatch(
                "merging models of different shape".into(),
            ));
        }
        let add = |a: &mut Vec<u64>, b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        add(&mut self.trajectory_count, &other.trajectory_count);
        add(&mut self.sa_count, &other.sa_count);
        add(&mut self.next_count, &other.next_count);
        add(&mut self.reward_count, &other.reward_count);
        for s in 0..self.n {
            self.reward_sum[s] += other.reward_sum[s];
            self.reward_sq[s] += other.reward_sq[s];
        }
        Ok(self.refresh_known())
    }

    /// Counts must agree with the known-set rule and with each other.
    pub fn is_consistent(&self) -> bool {
        let rows_ok = (0..self.n * self.k).all(|i| {
            self.next_count[i * self.n..(i + 1) * self.n]
                .iter()
                .sum::<u64>()
                == self.sa_count[i]
        });
        let known_ok =
            (0..self.n).all(|s| self.known[s] == (self.trajectory_count[s] >= self.thresholds.mq));
        rows_ok && known_ok
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("known model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Maximum-likelihood model from counts. Rows of pairs never tried are all
/// zero; [`EmpiricalModel::visited`] tells them apart.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel {
    n: usize,
    k: usize,
    known: Vec<bool>,
    visited: Vec<bool>,
    p: Vec<f64>,
    rewards: Vec<f64>,
    reward_seen: Vec<bool>,
}

impl EmpiricalModel {
    pub fn is_known(&self, s: usize) -> bool {
        self.known[s]
    }

    pub fn gamma_set(&self) -> Vec<usize> {
        (0..self.n).filter(|&s| self.known[s]).collect()
    }

    pub fn visited(&self, s: usize, a: usize) -> bool {
        self.visited[s * self.k + a]
    }

    pub fn reward_seen(&self, s: usize) -> bool {
        self.reward_seen[s]
    }

    /// The model as an [`Mdp`]; every pair must have been tried.
    pub fn to_mdp(&self, gamma: f64) -> Result<Mdp> {
        if let Some(i) = self.visited.iter().position(|&v| !v) {
            return Err(Error::UnvisitedPair {
                state: i / self.k,
                action: i % self.k,
            });
        }
        let rewards = self
            .rewards
            .iter()
            .map(|&r| RewardDist::Bernoulli(r))
            .collect();
        Mdp::new(self.n, self.k, gamma, self.p.clone(), rewards)
    }
}

impl TransitionModel for EmpiricalModel {
    fn n(&self) -> usize {
        self.n
    }
    fn k(&self) -> usize {
        self.k
    }
    fn row(&self, s: usize, a: usize) -> &[f64] {
        let i = (s * self.k + a) * self.n;
        &self.p[i..i + self.n]
    }
    fn mean_reward(&self, s: usize) -> f64 {
        self.rewards[s]
    }
}

/// Empirical transition rows and mean rewards. Fails if a pair rooted in the
/// known set has never been tried.
pub fn empirical_model(km: &KnownModel) -> Result<EmpiricalModel> {
    for s in km.gamma_set() {
        if let Some(a) = (0..km.k).find(|&a| km.visits(s, a) == 0) {
            return Err(Error::UnvisitedPair {
                state: s,
                action: a,
            });
        }
    }
    Ok(empirical_model_unchecked(km))
}

/// [`empirical_model`] without the known-set coverage check.
pub fn empirical_model_unchecked(km: &KnownModel) -> EmpiricalModel {
    let (n, k) = (km.n, km.k);
    let mut p = vec![0.0; n * k * n];
    let mut visited = vec![false; n * k];
    for s in 0..n {
        for a in 0..k {
            let c = km.visits(s, a);
            if c == 0 {
                continue;
            }
            visited[s * k + a] = true;
            for (next, &cnt) in km.next_counts(s, a).iter().enumerate() {
                p[(s * k + a) * n + next] = cnt as f64 / c as f64;
            }
        }
    }
    let reward_seen: Vec<bool> = km.reward_count.iter().map(|&c| c > 0).collect();
    let rewards = (0..n)
        .map(|s| {
            if reward_seen[s] {
                (km.reward_sum[s] / km.reward_count[s] as f64).clamp(0.0, 1.0)
            } else {
                0.0
            }
        })
        .collect();
    EmpiricalModel {
        n,
        k,
        known: km.known.clone(),
        visited,
        p,
        rewards,
        reward_seen,
    }
}

/// Which samples the plug-in planner trusts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateScope {
    /// Only the known set; every other state is worth the bracket value.
    Known,
    /// Every tried pair; untried pairs lead to the bracket value.
    Visited,
}

/// Plug-in Q estimates with unknown parts valued at 0 (pessimistic) or
/// `1/(1 - gamma)` (optimistic).
#[derive(Clone, Debug, PartialEq)]
pub struct QEstimates {
    pub pessimistic: QTable,
    pub optimistic: QTable,
}

/// Builds the plug-in MDP with an extra absorbing sink (index `n`) whose
/// reward is `sink_reward` and value `sink_reward / (1 - gamma)`.
fn bracketed_mdp(
    em: &EmpiricalModel,
    gamma: f64,
    scope: EstimateScope,
    sink_reward: f64,
) -> Result<Mdp> {
    let (n, k) = (em.n, em.k);
    let ns = n + 1;
    let mut p = vec![0.0; ns * k * ns];
    let mut rewards = vec![RewardDist::PointMass(sink_reward); ns];
    for s in 0..n {
        let trusted_state = match scope {
            EstimateScope::Known => em.known[s],
            EstimateScope::Visited => true,
        };
        for a in 0..k {
            let base = (s * k + a) * ns;
            let use_row = trusted_state && em.visited(s, a);
            if !use_row {
                p[base + n] = 1.0;
                continue;
            }
            for (next, &q) in em.row(s, a).iter().enumerate() {
                let keep = match scope {
                    EstimateScope::Known => em.known[next],
                    EstimateScope::Visited => true,
                };
                p[base + if keep { next } else { n }] += q;
            }
        }
        let has_reward = match scope {
            EstimateScope::Known => em.known[s],
            EstimateScope::Visited => em.reward_seen[s],
        };
        if has_reward {
            rewards[s] = RewardDist::PointMass(em.rewards[s]);
        }
    }
    for a in 0..k {
        p[(n * k + a) * ns + n] = 1.0;
    }
    Mdp::new(ns, k, gamma, p, rewards)
}

pub fn q_estimates(
    km: &KnownModel,
    gamma: f64,
    scope: EstimateScope,
    tol: f64,
) -> Result<QEstimates> {
    if scope == EstimateScope::Known && km.known_count() == 0 {
        return Err(Error::EmptyKnownSet);
    }
    let em = empirical_model(km)?;
    q_estimates_from_model(&em, gamma, scope, tol)
}

pub fn q_estimates_from_model(
    em: &EmpiricalModel,
    gamma: f64,
    scope: EstimateScope,
    tol: f64,
) -> Result<QEstimates> {
    let plan = |sink_reward: f64| -> Result<QTable> {
        let m = bracketed_mdp(em, gamma, scope, sink_reward)?;
        let (_, q) = value_iteration(&m, tol)?;
        QTable::from_rows((0..em.n).map(|s| q.row(s).to_vec()).collect())
    };
    Ok(QEstimates {
        pessimistic: plan(0.0)?,
        optimistic: plan(1.0)?,
    })
}

/// First entry where two models differ by more than `beta`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "entry", rename_all = "snake_case")]
pub enum BetaWitness {
    Reward {
        state: usize,
        diff: f64,
    },
    Transition {
        state: usize,
        action: usize,
        next: usize,
        diff: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaCheck {
    pub holds: bool,
    pub witness: Option<BetaWitness>,
}

/// Whether `mhat` is a beta-approximation of `m`: all mean rewards and all
/// transition probabilities within `beta`.
pub fn beta_approx_check<A: TransitionModel, B: TransitionModel>(
    m: &A,
    mhat: &B,
    beta: f64,
) -> Result<BetaCheck> {
    if m.n() != mhat.n() || m.k() != mhat.k() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} versus {}x{}",
            m.n(),
            m.k(),
            mhat.n(),
            mhat.k()
        )));
    }
    let fail = |w| {
        Ok(BetaCheck {
            holds: false,
            witness: Some(w),
        })
    };
    for s in 0..m.n() {
        let diff = (m.mean_reward(s) - mhat.mean_reward(s)).abs();
        if diff > beta {
            return fail(BetaWitness::Reward { state: s, diff });
        }
        for a in 0..m.k() {
            for (next, (x, y)) in m.row(s, a).iter().zip(mhat.row(s, a)).enumerate() {
                let diff = (x - y).abs();
                if diff > beta {
                    return fail(BetaWitness::Transition {
                        state: s,
                        action: a,
                        next,
                        diff,
                    });
                }
            }
        }
    }
    Ok(BetaCheck {
        holds: true,
        witness: None,
    })
}
