use serde::{Deserialize, Serialize};

use super::config::{EscapeMode, EstimateSource, FairE3Config};
use crate::error::{Error, Result};
use crate::estimation::{
    empirical_model_unchecked, q_estimates_from_model, EmpiricalModel, EstimateScope, KnownModel,
};
use crate::fairness::allowed_actions;
use crate::induced::{
    build_exploitation, build_exploration, decide, escape_probability_mc, restricted_greedy,
    DecideParams, Decision, DecisionEvent, InducedMdp, Variant,
};
use crate::markov::stationary_distribution;
use crate::planning::{value_iteration, QTable};
use crate::policy::{Learner, StochasticPolicy, Transition};
use crate::sim::{rng_from_seed, SimRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    RandomTrajectory,
    Exploring,
    Exploiting,
    Deciding,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Phase {
    /// Uniform play; `steps` holds the trajectory so far, rooted at its first state.
    RandomTrajectory {
        remaining: u64,
        steps: Vec<Transition>,
    },
    Exploring {
        policy: PhasePolicy,
        remaining: u64,
    },
    Exploiting {
        policy: PhasePolicy,
        remaining: u64,
    },
    Deciding,
}

impl Phase {
    pub fn kind(&self) -> PhaseKind {
        match self {
            Phase::RandomTrajectory { .. } => PhaseKind::RandomTrajectory,
            Phase::Exploring { .. } => PhaseKind::Exploring,
            Phase::Exploiting { .. } => PhaseKind::Exploiting,
            Phase::Deciding => PhaseKind::Deciding,
        }
    }
}

/// A policy over the local states of an induced MDP together with the known
/// set it was planned for.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePolicy {
    pub states: Vec<usize>,
    pub policy: StochasticPolicy,
}

impl PhasePolicy {
    fn row(&self, s: usize) -> Option<&[f64]> {
        self.states
            .binary_search(&s)
            .ok()
            .map(|i| self.policy.row(i))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LearnerCounters {
    pub trajectories: u64,
    pub explorations: u64,
    pub exploitations: u64,
    pub exploit_phases_completed: u64,
    pub aborted_phases: u64,
    pub steps_random: u64,
    pub steps_explore: u64,
    pub steps_exploit: u64,
}

/// The Fair-E3 learner.
///
/// Outside the known set it plays uniformly, one length-`H` trajectory at a
/// time. At a known state it plans in the exploitation and exploration MDPs
/// restricted to actions whose estimated `Q*` is within `alpha` of the best,
/// explores for `2T` steps if the exploration policy escapes often enough
/// and otherwise exploits for `T` steps. A policy phase that reaches an
/// unknown state stops and a random trajectory starts there.
///
/// Restriction uses the pessimistic plug-in estimate over every tried pair.
/// A known state only takes part in planning once all of its actions have
/// been tried at least once.
#[derive(Debug)]
pub struct FairE3 {
    config: FairE3Config,
    n: usize,
    k: usize,
    km: KnownModel,
    phase: Phase,
    tstar: u64,
    counters: LearnerCounters,
    pending: Option<(usize, Vec<f64>)>,
    /// Phase that produced the last committed distribution.
    last_kind: PhaseKind,
    error: Option<Error>,
    decisions: Vec<DecisionEvent>,
    log_decisions: bool,
    clock: u64,
    window: Vec<usize>,
    phases_since_check: u64,
    rng: SimRng,
    oracle_q: Option<QTable>,
}

impl FairE3 {
    pub fn new(config: FairE3Config, n: usize, k: usize) -> Result<Self> {
        config.validate()?;
        let oracle_q = match &config.estimates {
            EstimateSource::Oracle(m) => {
                if m.n() != n || m.k() != k {
                    return Err(Error::DimensionMismatch(
                        "oracle model shape differs from the instance".into(),
                    ));
                }
                Some(value_iteration(m, config.plan_tol)?.1)
            }
            EstimateSource::Learned => None,
        };
        let km = KnownModel::new(n, k, config.horizon as usize, config.thresholds)?;
        Ok(FairE3 {
            tstar: config.tstar.unwrap_or(1),
            rng: rng_from_seed(config.mc_seed),
            config,
            n,
            k,
            km,
            phase: Phase::Deciding,
            counters: LearnerCounters::default(),
            pending: None,
            last_kind: PhaseKind::Deciding,
            error: None,
            decisions: Vec::new(),
            log_decisions: false,
            clock: 0,
            window: Vec::new(),
            phases_since_check: 0,
            oracle_q,
        })
    }

    pub fn config(&self) -> &FairE3Config {
        &self.config
    }

    pub fn known_model(&self) -> &KnownModel {
        &self.km
    }

    pub fn phase(&self) -> &Phase {
        &self.phase
    }

    pub fn counters(&self) -> LearnerCounters {
        self.counters
    }

    /// Current mixing-time guess (fixed unless running sequentially).
    pub fn tstar(&self) -> u64 {
        self.tstar
    }

    /// Phase behind the most recent `act`.
    pub fn last_phase_kind(&self) -> PhaseKind {
        self.last_kind
    }

    pub fn enable_decision_log(&mut self) {
        self.log_decisions = true;
    }

    pub fn decisions(&self) -> &[DecisionEvent] {
        &self.decisions
    }

    fn uniform(&self) -> Vec<f64> {
        vec![1.0 / self.k as f64; self.k]
    }

    fn start_trajectory(&mut self) -> Vec<f64> {
        self.phase = Phase::RandomTrajectory {
            remaining: self.config.horizon,
            steps: Vec::with_capacity(self.config.horizon as usize),
        };
        self.uniform()
    }

    /// Known states usable for planning: every action tried at least once.
    fn planning_set(&self) -> Vec<usize> {
        self.km
            .gamma_set()
            .into_iter()
            .filter(|&s| (0..self.k).all(|a| self.km.visits(s, a) > 0))
            .collect()
    }

    fn plan_at(&mut self, s: usize, gammaset: &[usize]) -> Result<Decision> {
        let cfg = &self.config;
        let (exploit, explore, q): (InducedMdp, InducedMdp, QTable) =
            match (&cfg.estimates, &self.oracle_q) {
                (EstimateSource::Oracle(m), Some(q)) => (
                    build_exploitation(m.as_ref(), gammaset, cfg.gamma)?,
                    build_exploration(m.as_ref(), gammaset, cfg.gamma)?,
                    q.clone(),
                ),
                _ => {
                    let em: EmpiricalModel = empirical_model_unchecked(&self.km);
                    let q = q_estimates_from_model(
                        &em,
                        cfg.gamma,
                        EstimateScope::Visited,
                        cfg.plan_tol,
                    )?
                    .pessimistic;
                    (
                        build_exploitation(&em, gammaset, cfg.gamma)?,
                        build_exploration(&em, gammaset, cfg.gamma)?,
                        q,
                    )
                }
            };
        let allowed = exploit.localize_allowed(&allowed_actions(&q, cfg.alpha, cfg.tie_tol));
        let params = DecideParams {
            t: self.tstar,
            beta: cfg.beta,
            plan_tol: cfg.plan_tol,
            tie_tol: cfg.tie_tol,
        };
        match cfg.escape {
            EscapeMode::Exact => decide(s, &exploit, &explore, &allowed, &params),
            EscapeMode::MonteCarlo { reps } => {
                let threshold = params.beta / (4.0 * params.t as f64);
                let pi =
                    restricted_greedy(&explore.mdp, &allowed, params.plan_tol, params.tie_tol)?;
                let p = escape_probability_mc(&explore, &pi, s, 2 * params.t, reps, &mut self.rng)?;
                if p >= threshold {
                    Ok(Decision {
                        variant: Variant::Explore,
                        policy: pi,
                        p,
                        threshold,
                        t: params.t,
                    })
                } else {
                    Ok(Decision {
                        variant: Variant::Exploit,
                        policy: restricted_greedy(
                            &exploit.mdp,
                            &allowed,
                            params.plan_tol,
                            params.tie_tol,
                        )?,
                        p,
                        threshold,
                        t: params.t,
                    })
                }
            }
        }
    }

    fn dispatch(&mut self, s: usize) -> Result<Vec<f64>> {
        if let Phase::Exploring { policy, .. } | Phase::Exploiting { policy, .. } = &self.phase {
            return Ok(match policy.row(s) {
                Some(row) => row.to_vec(),
                None => {
                    self.counters.aborted_phases += 1;
                    self.start_trajectory()
                }
            });
        }
        if let Phase::RandomTrajectory { .. } = self.phase {
            return Ok(self.uniform());
        }
        let gammaset = self.planning_set();
        if gammaset.binary_search(&s).is_err() {
            return Ok(self.start_trajectory());
        }
        let decision = self.plan_at(s, &gammaset)?;
        if self.log_decisions {
            self.decisions
                .push(DecisionEvent::new(self.clock, s, &decision));
        }
        let policy = PhasePolicy {
            states: gammaset,
            policy: decision.policy,
        };
        let row = policy
            .row(s)
            .expect("state is in the planning set")
            .to_vec();
        self.phase = match decision.variant {
            Variant::Explore => {
                self.counters.explorations += 1;
                Phase::Exploring {
                    policy,
                    remaining: 2 * self.tstar,
                }
            }
            Variant::Exploit => {
                self.counters.exploitations += 1;
                Phase::Exploiting {
                    policy,
                    remaining: self.tstar,
                }
            }
        };
        Ok(row)
    }

    /// Sequential mode: after enough exploitation phases, compare the average
    /// estimated optimal value of the states visited while exploiting with
    /// its stationary expectation, and raise the guess if they differ by
    /// more than `eps / (1 - gamma)`.
    fn check_guess(&mut self) {
        if self.config.tstar.is_some() || self.phases_since_check < self.config.min_exploit_phases {
            return;
        }
        self.phases_since_check = 0;
        let window = std::mem::take(&mut self.window);
        let em = empirical_model_unchecked(&self.km);
        let Ok(model) = em.to_mdp(self.config.gamma) else {
            return;
        };
        let Ok((v, q)) = value_iteration(&model, self.config.plan_tol) else {
            return;
        };
        let Ok(mu) = stationary_distribution(&model, &q.greedy_policy(self.config.tie_tol), 1e-10)
        else {
            return;
        };
        let avg = window.iter().map(|&s| v.get(s)).sum::<f64>() / window.len().max(1) as f64;
        if v.expect(mu.as_slice()) - avg > self.config.eps / (1.0 - self.config.gamma) {
            self.tstar += 1;
        }
    }

    fn advance(&mut self, tr: &Transition) -> Result<()> {
        match &mut self.phase {
            Phase::RandomTrajectory { remaining, steps } => {
                steps.push(*tr);
                *remaining -= 1;
                self.counters.steps_random += 1;
                if *remaining == 0 {
                    let steps = std::mem::take(steps);
                    self.phase = Phase::Deciding;
                    self.km.record_trajectory(&steps)?;
                    self.counters.trajectories += 1;
                }
            }
            Phase::Exploring { remaining, .. } => {
                self.km.record_transition(tr)?;
                self.counters.steps_explore += 1;
                *remaining -= 1;
                if *remaining == 0 {
                    self.phase = Phase::Deciding;
                }
            }
            Phase::Exploiting { remaining, .. } => {
                self.km.record_transition(tr)?;
                self.counters.steps_exploit += 1;
                self.window.push(tr.state);
                *remaining -= 1;
                if *remaining == 0 {
                    self.phase = Phase::Deciding;
                    self.counters.exploit_phases_completed += 1;
                    self.phases_since_check += 1;
                    self.check_guess();
                }
            }
            Phase::Deciding => {
                return Err(Error::OutOfOrder(
                    "observation without an active phase".into(),
                ));
            }
        }
        Ok(())
    }
}

impl Learner for FairE3 {
    fn act(&mut self, state: usize) -> Vec<f64> {
        if self.error.is_some() || state >= self.n {
            self.error.get_or_insert(Error::InvalidParameter(format!(
                "state {state} out of range"
            )));
            return self.uniform();
        }
        let dist = match self.dispatch(state) {
            Ok(d) => d,
            Err(e) => {
                self.error = Some(e);
                self.uniform()
            }
        };
        self.last_kind = self.phase.kind();
        self.pending = Some((state, dist.clone()));
        dist
    }

    fn observe(&mut self, tr: &Transition) -> Result<()> {
        if let Some(e) = self.error.take() {
            return Err(e);
        }
        let Some((state, dist)) = self.pending.take() else {
            return Err(Error::OutOfOrder("observe called before act".into()));
        };
        if tr.state != state || tr.action >= self.k || dist[tr.action] <= 0.0 {
            return Err(Error::OutOfOrder(format!(
                "transition from state {} with action {} does not match the committed distribution at state {state}",
                tr.state, tr.action
            )));
        }
        self.clock += 1;
        self.advance(tr)
    }
}
