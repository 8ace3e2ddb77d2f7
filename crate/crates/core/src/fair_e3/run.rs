use serde::{Deserialize, Serialize};

use super::config::FairE3Config;
use super::learner::{FairE3, LearnerCounters, PhaseKind};
use crate::error::{Error, Result};
use crate::fairness::{audit_action, fair_optimal_policy, Definition, FairnessReport, Verdict};
use crate::induced::DecisionEvent;
use crate::markov::stationary_distribution;
use crate::mdp::Mdp;
use crate::planning::value_iteration;
use crate::sim::{epsilon_optimality_gap, rng_from_seed, step_once, Trace, TraceStep};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub definition: Definition,
    pub alpha: f64,
    pub verdict: Verdict,
    pub violation_count: usize,
}

impl From<&FairnessReport> for AuditSummary {
    fn from(r: &FairnessReport) -> Self {
        AuditSummary {
            definition: r.definition,
            alpha: r.alpha,
            verdict: r.verdict,
            violation_count: r.violation_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    #[serde(rename = "T")]
    pub t: usize,
    pub gap: f64,
    pub steps_random: u64,
    pub steps_explore: u64,
    pub steps_exploit: u64,
    /// `(t, |known set|)` at the start and after every change.
    pub known_curve: Vec<(usize, usize)>,
    pub audit: AuditSummary,
    pub trajectories: u64,
    pub explorations: u64,
    pub exploit_phases_completed: u64,
    pub tstar_final: u64,
    pub exploration_budget: u64,
}

pub struct RunOutput {
    pub trace: Trace,
    pub metrics: RunMetrics,
    /// Phase behind each step's distribution.
    pub phases: Vec<PhaseKind>,
    /// Whether each step's state was known when the distribution was committed.
    pub known_at_step: Vec<bool>,
    pub counters: LearnerCounters,
    pub decisions: Vec<DecisionEvent>,
}

/// Runs Fair-E3 on `m` from state 0 for `steps` steps and measures the
/// visited-state gap against the uniform-over-argmax optimal policy and an
/// alpha-action audit against the true `Q*`.
pub fn run_fair_e3(m: &Mdp, config: &FairE3Config, steps: usize, seed: u64) -> Result<RunOutput> {
    if steps == 0 {
        return Err(Error::InvalidParameter("need at least one step".into()));
    }
    if (m.gamma() - config.gamma).abs() > 0.0 {
        return Err(Error::InvalidParameter(format!(
            "instance discount {} differs from configured {}",
            m.gamma(),
            config.gamma
        )));
    }
    let (vstar, qstar) = value_iteration(m, config.plan_tol.min(1e-10))?;
    let pistar = fair_optimal_policy(m, &qstar, config.tie_tol)?;
    let mustar = stationary_distribution(m, &pistar, 1e-12)?;

    let mut learner = FairE3::new(config.clone(), m.n(), m.k())?;
    learner.enable_decision_log();
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(steps);
    let mut phases = Vec::with_capacity(steps);
    let mut known_at_step = Vec::with_capacity(steps);
    let mut known_curve = vec![(0, 0)];
    let mut state = 0;
    for t in 0..steps {
        known_at_step.push(learner.known_model().is_known(state));
        let tr = step_once(
            m,
            &mut learner,
            state,
            t,
            &mut rng,
            |dist, action, reward| {
                out.push(TraceStep {
                    t,
                    state,
                    dist,
                    action,
                    reward,
                })
            },
        )?;
        phases.push(learner.last_phase_kind());
        let known = learner.known_model().known_count();
        if known != known_curve.last().expect("nonempty").1 {
            known_curve.push((t + 1, known));
        }
        state = tr.next_state;
    }
    let trace = Trace {
        steps: out,
        seed: Some(seed),
    };
    let gap = epsilon_optimality_gap(&trace, &vstar, &mustar)?;
    let report = audit_action(&trace, &qstar, config.alpha, config.tie_tol)?;
    let counters = learner.counters();
    let metrics = RunMetrics {
        seed,
        t: steps,
        gap,
        steps_random: counters.steps_random,
        steps_explore: counters.steps_explore,
        steps_exploit: counters.steps_exploit,
        known_curve,
        audit: AuditSummary::from(&report),
        trajectories: counters.trajectories,
        explorations: counters.explorations,
        exploit_phases_completed: counters.exploit_phases_completed,
        tstar_final: learner.tstar(),
        exploration_budget: config.exploration_budget(m.n(), learner.tstar()),
    };
    Ok(RunOutput {
        trace,
        metrics,
        phases,
        known_at_step,
        counters,
        decisions: learner.decisions().to_vec(),
    })
}
