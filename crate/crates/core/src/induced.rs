//! Exploitation and exploration MDPs over a known set, escape probabilities
//! and the exploit-or-explore decision.
//!
//! An induced MDP keeps the known states (in increasing order) as local
//! states `0..g` and adds an absorbing state `s0` at local index `g`. All
//! probability mass leaving the known set is redirected to `s0`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fairness::allowed_actions;
use crate::markov::{state_transition_matrix, step_distribution};
use crate::mdp::{sample_index, Mdp, RewardDist, TransitionModel};
use crate::planning::{value_iteration, value_iteration_restricted, QTable};
use crate::policy::StochasticPolicy;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InducedKind {
    /// Source rewards on the known set, 0 at `s0`.
    Exploitation,
    /// 0 on the known set, 1 at `s0`.
    Exploration,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InducedMdp {
    pub kind: InducedKind,
    /// Global index of each local known state.
    pub states: Vec<usize>,
    pub mdp: Mdp,
}

impl InducedMdp {
    /// Local index of the absorbing state.
    pub fn s0(&self) -> usize {
        self.states.len()
    }

    pub fn local(&self, global: usize) -> Option<usize> {
        self.states.binary_search(&global).ok()
    }

    pub fn global(&self, local: usize) -> Option<usize> {
        self.states.get(local).copied()
    }

    /// Turns per-global-state action sets into local ones; `s0` gets every action.
    pub fn localize_allowed(&self, allowed: &[Vec<usize>]) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self.states.iter().map(|&s| allowed[s].clone()).collect();
        out.push((0..self.mdp.k()).collect());
        out
    }
}

fn check_gamma_set(gammaset: &[usize], n: usize) -> Result<()> {
    if gammaset.is_empty() {
        return Err(Error::EmptyKnownSet);
    }
    if gammaset.windows(2).any(|w| w[0] >= w[1]) || gammaset.iter().any(|&s| s >= n) {
        return Err(Error::InvalidParameter(
            "known set must be strictly increasing and within range".into(),
        ));
    }
    Ok(())
}

fn build<M: TransitionModel>(
    model: &M,
    gammaset: &[usize],
    gamma: f64,
    kind: InducedKind,
) -> Result<InducedMdp> {
    check_gamma_set(gammaset, model.n())?;
    let n = model.n();
    let k = model.k();
    let g = gammaset.len();
    let ns = g + 1;
    let mut local = vec![None; n];
    for (i, &s) in gammaset.iter().enumerate() {
        local[s] = Some(i);
    }
    let mut p = vec![0.0; ns * k * ns];
    for (i, &s) in gammaset.iter().enumerate() {
        for a in 0..k {
            let base = (i * k + a) * ns;
            for (next, &q) in model.row(s, a).iter().enumerate() {
                p[base + local[next].unwrap_or(g)] += q;
            }
        }
    }
    for a in 0..k {
        p[(g * k + a) * ns + g] = 1.0;
    }
    let mut rewards: Vec<RewardDist> = match kind {
        InducedKind::Exploitation => gammaset
            .iter()
            .map(|&s| RewardDist::PointMass(model.mean_reward(s)))
            .collect(),
        InducedKind::Exploration => vec![RewardDist::PointMass(0.0); g],
    };
    rewards.push(RewardDist::PointMass(match kind {
        InducedKind::Exploitation => 0.0,
        InducedKind::Exploration => 1.0,
    }));
    let mdp = Mdp::new(ns, k, gamma, p, rewards)?;
    Ok(InducedMdp {
        kind,
        states: gammaset.to_vec(),
        mdp,
    })
}

pub fn build_exploitation<M: TransitionModel>(
    model: &M,
    gammaset: &[usize],
    gamma: f64,
) -> Result<InducedMdp> {
    build(model, gammaset, gamma, InducedKind::Exploitation)
}

pub fn build_exploration<M: TransitionModel>(
    model: &M,
    gammaset: &[usize],
    gamma: f64,
) -> Result<InducedMdp> {
    build(model, gammaset, gamma, InducedKind::Exploration)
}

/// Probability that a walk of `steps` steps from global state `s` under the
/// local policy `pi` ends in `s0`. Since `s0` is absorbing this is also the
/// probability of reaching it at all within `steps`.
pub fn escape_probability(
    induced: &InducedMdp,
    pi: &StochasticPolicy,
    s: usize,
    steps: u64,
) -> Result<f64> {
    let start = induced.local(s).ok_or(Error::NotKnown(s))?;
    if steps == 0 {
        return Err(Error::InvalidParameter(
            "escape horizon must be at least 1".into(),
        ));
    }
    let matrix = state_transition_matrix(&induced.mdp, pi)?;
    let mut d = vec![0.0; induced.s0() + 1];
    d[start] = 1.0;
    for _ in 0..steps {
        d = step_distribution(&d, &matrix);
    }
    Ok(d[induced.s0()].clamp(0.0, 1.0))
}

/// Monte Carlo estimate of [`escape_probability`] from `reps` simulated walks.
pub fn escape_probability_mc<R: Rng + ?Sized>(
    induced: &InducedMdp,
    pi: &StochasticPolicy,
    s: usize,
    steps: u64,
    reps: u64,
    rng: &mut R,
) -> Result<f64> {
    let start = induced.local(s).ok_or(Error::NotKnown(s))?;
    if steps == 0 || reps == 0 {
        return Err(Error::InvalidParameter(
            "escape horizon and repetitions must be at least 1".into(),
        ));
    }
    let s0 = induced.s0();
    let mut hits = 0u64;
    for _ in 0..reps {
        let mut x = start;
        for _ in 0..steps {
            if x == s0 {
                break;
            }
            let a = sample_index(pi.row(x), rng.gen::<f64>());
            x = sample_index(induced.mdp.row(x, a), rng.gen::<f64>());
        }
        hits += u64::from(x == s0);
    }
    Ok(hits as f64 / reps as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Exploit,
    Explore,
}

/// Outcome of the exploit-or-explore test at one known state. `policy` is
/// over the local states of the induced MDPs.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub variant: Variant,
    pub policy: StochasticPolicy,
    /// Escape probability of the exploration policy.
    pub p: f64,
    pub threshold: f64,
    pub t: u64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecideParams {
    /// Mixing-time horizon; escape is measured over `2 t` steps.
    pub t: u64,
    /// Exploration happens when `p >= beta / (4 t)`.
    pub beta: f64,
    pub plan_tol: f64,
    /// Ties between allowed actions go to the lowest index at this tolerance.
    pub tie_tol: f64,
}

/// Greedy deterministic policy of `m` restricted to `allowed`.
pub fn restricted_greedy(
    m: &Mdp,
    allowed: &[Vec<usize>],
    plan_tol: f64,
    tie_tol: f64,
) -> Result<StochasticPolicy> {
    let (_, q) = value_iteration_restricted(m, allowed, plan_tol)?;
    let actions: Vec<usize> = (0..m.n())
        .map(|s| q.greedy_among(s, &allowed[s], tie_tol))
        .collect();
    Ok(StochasticPolicy::deterministic(&actions, m.k()))
}

/// Plans the exploration MDP under `allowed_local`; explores if the
/// resulting policy escapes from `s` with probability at least
/// `beta / (4 t)` within `2 t` steps, otherwise exploits.
pub fn decide(
    s: usize,
    exploit: &InducedMdp,
    explore: &InducedMdp,
    allowed_local: &[Vec<usize>],
    params: &DecideParams,
) -> Result<Decision> {
    if exploit.states != explore.states {
        return Err(Error::DimensionMismatch(
            "induced MDPs built from different known sets".into(),
        ));
    }
    if params.t == 0 || !(params.beta > 0.0) {
        return Err(Error::InvalidParameter("need t >= 1 and beta > 0".into()));
    }
    let threshold = params.beta / (4.0 * params.t as f64);
    let pi_explore =
        restricted_greedy(&explore.mdp, allowed_local, params.plan_tol, params.tie_tol)?;
    let p = escape_probability(explore, &pi_explore, s, 2 * params.t)?;
    if p >= threshold {
        return Ok(Decision {
            variant: Variant::Explore,
            policy: pi_explore,
            p,
            threshold,
            t: params.t,
        });
    }
    let pi_exploit =
        restricted_greedy(&exploit.mdp, allowed_local, params.plan_tol, params.tie_tol)?;
    Ok(Decision {
        variant: Variant::Exploit,
        policy: pi_exploit,
        p,
        threshold,
        t: params.t,
    })
}

/// Identifier of a deterministic local policy: its actions joined by `-`,
/// with `*` for stochastic rows.
pub fn policy_id(pi: &StochasticPolicy) -> String {
    (0..pi.n())
        .map(|s| {
            pi.deterministic_action(s)
                .map_or("*".to_string(), |a| a.to_string())
        })
        .collect::<Vec<_>>()
        .join("-")
}

/// JSON log line for one decision.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionEvent {
    pub t: u64,
    pub state: usize,
    pub variant: Variant,
    pub p: f64,
    pub threshold: f64,
    pub policy_id: String,
}

impl DecisionEvent {
    pub fn new(t: u64, state: usize, d: &Decision) -> Self {
        DecisionEvent {
            t,
            state,
            variant: d.variant,
            p: d.p,
            threshold: d.threshold,
            policy_id: policy_id(&d.policy),
        }
    }
}

/// Which disjunct a witness certifies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WitnessKind {
    /// Average per-step deficit against the best policy of the full MDP.
    Exploit { deficit: f64 },
    /// Probability of ending in `s0` after `2T` steps.
    Explore { escape: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub state: usize,
    pub kind: WitnessKind,
    /// Action per known state, in known-set order.
    pub policy: Vec<usize>,
}

pub const MAX_VERIFY_STATES: usize = 5;
pub const MAX_VERIFY_ACTIONS: usize = 3;

/// `V^pi(s, T)`: expected discounted reward over `T` steps.
fn finite_values(m: &Mdp, actions: &[usize], horizon: u64) -> Vec<f64> {
    let n = m.n();
    let mut v = vec![0.0; n];
    for _ in 0..horizon {
        v = (0..n)
            .map(|s| {
                let ev: f64 = m
                    .row(s, actions[s])
                    .iter()
                    .zip(&v)
                    .map(|(p, x)| p * x)
                    .sum();
                m.mean_reward(s) + m.gamma() * ev
            })
            .collect();
    }
    v
}

/// `sum_{t=1}^T E V^pi(pi^t(s), T)` for every start state, plus the
/// distributions after `2T` steps when requested.
fn path_score(m: &Mdp, actions: &[usize], t: u64, start: usize) -> (f64, Vec<f64>) {
    let pi = StochasticPolicy::deterministic(actions, m.k());
    let matrix = state_transition_matrix(m, &pi).expect("policy matches MDP");
    let v = finite_values(m, actions, t);
    let mut d = vec![0.0; m.n()];
    d[start] = 1.0;
    let mut score = 0.0;
    for step in 1..=2 * t {
        d = step_distribution(&d, &matrix);
        if step <= t {
            score += d.iter().zip(&v).map(|(p, x)| p * x).sum::<f64>();
        }
    }
    (score, d)
}

/// Calls `f` on every deterministic policy whose action in state `s` comes
/// from `choices[s]`.
fn for_each_policy(choices: &[Vec<usize>], mut f: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; choices.len()];
    let mut actions: Vec<usize> = choices.iter().map(|c| c[0]).collect();
    loop {
        f(&actions);
        let mut i = 0;
        loop {
            if i == choices.len() {
                return;
            }
            idx[i] += 1;
            if idx[i] < choices[i].len() {
                actions[i] = choices[i][idx[i]];
                break;
            }
            idx[i] = 0;
            actions[i] = choices[i][0];
            i += 1;
        }
    }
}

/// Exhaustive check of the exploit-or-explore property at every known state.
///
/// Policies of the restricted exploitation MDP may use, at each known state,
/// the actions within `alpha` of the best under the exact `Q*` of `m`. For
/// each known `s` this looks for either such a policy whose average
/// `T`-step value along its own path is within `beta` of the best
/// deterministic policy of `m`, or such a policy that ends in `s0` after
/// `2T` steps with probability above `beta / T`. Exploit witnesses are
/// preferred.
pub fn verify_exploit_or_explore(
    m: &Mdp,
    gammaset: &[usize],
    t: u64,
    beta: f64,
    alpha: f64,
    tie_tol: f64,
) -> Result<Vec<Witness>> {
    if m.n() > MAX_VERIFY_STATES || m.k() > MAX_VERIFY_ACTIONS {
        return Err(Error::TooLarge(format!(
            "{} states and {} actions (limit {MAX_VERIFY_STATES} and {MAX_VERIFY_ACTIONS})",
            m.n(),
            m.k()
        )));
    }
    if t == 0 || !(beta > 0.0) || !(alpha >= 0.0) {
        return Err(Error::InvalidParameter(
            "need T >= 1, beta > 0 and alpha >= 0".into(),
        ));
    }
    let exploit = build_exploitation(m, gammaset, m.gamma())?;
    let (_, qstar): (_, QTable) = value_iteration(m, 1e-11)?;
    let allowed = exploit.localize_allowed(&allowed_actions(&qstar, alpha, tie_tol));
    let all: Vec<Vec<usize>> = vec![(0..m.k()).collect(); m.n()];
    let s0 = exploit.s0();
    let mut witnesses = Vec::with_capacity(gammaset.len());
    for &s in gammaset {
        let mut best_full = f64::NEG_INFINITY;
        for_each_policy(&all, |actions| {
            best_full = best_full.max(path_score(m, actions, t, s).0);
        });
        let start = exploit.local(s).expect("state is known");
        let mut best_exploit: Option<(f64, Vec<usize>)> = None;
        let mut best_explore: Option<(f64, Vec<usize>)> = None;
        for_each_policy(&allowed, |actions| {
            let (score, d) = path_score(&exploit.mdp, actions, t, start);
            let deficit = (best_full - score) / t as f64;
            if best_exploit.as_ref().is_none_or(|(b, _)| deficit < *b) {
                best_exploit = Some((deficit, actions[..s0].to_vec()));
            }
            if best_explore.as_ref().is_none_or(|(b, _)| d[s0] > *b) {
                best_explore = Some((d[s0], actions[..s0].to_vec()));
            }
        });
        let (deficit, exploit_policy) = best_exploit.expect("at least one policy");
        let (escape, explore_policy) = best_explore.expect("at least one policy");
        let witness = if deficit <= beta {
            Witness {
                state: s,
                kind: WitnessKind::Exploit { deficit },
                policy: exploit_policy,
            }
        } else if escape > beta / t as f64 {
            Witness {
                state: s,
                kind: WitnessKind::Explore { escape },
                policy: explore_policy,
            }
        } else {
            return Err(Error::NoWitness(s));
        };
        witnesses.push(witness);
    }
    Ok(witnesses)
}
