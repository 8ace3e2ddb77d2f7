//! Fairness auditors over recorded traces and the alpha-restricted MDP.
//!
//! Each step of a trace carries the full action distribution `L(s, ., h)`
//! the learner committed to. Audits compare every ordered action pair at
//! every step against the true `Q*`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::planning::{value_iteration_restricted, QTable, ValueTable};
use crate::policy::StochasticPolicy;
use crate::sim::{Trace, TraceStep};

pub const DEFAULT_TIE_TOL: f64 = 1e-6;
pub const MAX_REPORTED_VIOLATIONS: usize = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Definition {
    Exact,
    Choice,
    Action,
}

impl fmt::Display for Definition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Definition::Exact => "exact",
            Definition::Choice => "choice",
            Definition::Action => "action",
        })
    }
}

impl std::str::FromStr for Definition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Definition::Exact),
            "choice" => Ok(Definition::Choice),
            "action" => Ok(Definition::Action),
            other => Err(Error::InvalidParameter(format!(
                "unknown fairness definition '{other}' (expected exact, choice or action)"
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// Action `a` was given less probability than `a_prime` although the
/// definition forbids it. `qgap = Q*(s,a) - Q*(s,a')`, `pgap = L(a') - L(a)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub t: usize,
    pub state: usize,
    pub a: usize,
    pub a_prime: usize,
    pub qgap: f64,
    pub pgap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessReport {
    pub definition: Definition,
    pub alpha: f64,
    pub verdict: Verdict,
    pub violation_count: usize,
    /// At most [`MAX_REPORTED_VIOLATIONS`] entries; `violation_count` is exact.
    pub violations: Vec<Violation>,
}

impl FairnessReport {
    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

/// Whether the pair `(a, a')` with the given Q values and probabilities
/// violates `def`.
pub fn is_violation(
    def: Definition,
    alpha: f64,
    tie_tol: f64,
    qa: f64,
    qb: f64,
    pa: f64,
    pb: f64,
) -> bool {
    match def {
        Definition::Exact => qa >= qb - tie_tol && pa < pb - tie_tol,
        Definition::Choice => qa >= qb - tie_tol && pa < pb - alpha - tie_tol,
        Definition::Action => qa > qb + alpha + tie_tol && pa < pb - tie_tol,
    }
}

fn check_params(alpha: f64, tie_tol: f64) -> Result<()> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "alpha = {alpha} must be nonnegative"
        )));
    }
    if !(tie_tol >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tie tolerance {tie_tol} must be nonnegative"
        )));
    }
    Ok(())
}

fn audit_steps<'a, I>(
    steps: I,
    qstar: &QTable,
    def: Definition,
    alpha: f64,
    tie_tol: f64,
) -> Result<FairnessReport>
where
    I: IntoIterator<Item = &'a TraceStep>,
{
    check_params(alpha, tie_tol)?;
    let k = qstar.k();
    let mut violations = Vec::new();
    let mut count = 0;
    for step in steps {
        if step.state >= qstar.n() || step.dist.len() != k {
            return Err(Error::DimensionMismatch(format!(
                "step {} has state {} and {} probabilities, Q table is {}x{}",
                step.t,
                step.state,
                step.dist.len(),
                qstar.n(),
                k
            )));
        }
        let q = qstar.row(step.state);
        for a in 0..k {
            for b in 0..k {
                if a != b
                    && is_violation(def, alpha, tie_tol, q[a], q[b], step.dist[a], step.dist[b])
                {
                    count += 1;
                    if violations.len() < MAX_REPORTED_VIOLATIONS {
                        violations.push(Violation {
                            t: step.t,
                            state: step.state,
                            a,
                            a_prime: b,
                            qgap: q[a] - q[b],
                            pgap: step.dist[b] - step.dist[a],
                        });
                    }
                }
            }
        }
    }
    Ok(FairnessReport {
        definition: def,
        alpha: if def == Definition::Exact { 0.0 } else { alpha },
        verdict: if count == 0 {
            Verdict::Pass
        } else {
            Verdict::Fail
        },
        violation_count: count,
        violations,
    })
}

pub fn audit(
    trace: &Trace,
    qstar: &QTable,
    def: Definition,
    alpha: f64,
    tie_tol: f64,
) -> Result<FairnessReport> {
    audit_steps(&trace.steps, qstar, def, alpha, tie_tol)
}

pub fn audit_exact(trace: &Trace, qstar: &QTable, tie_tol: f64) -> Result<FairnessReport> {
    audit(trace, qstar, Definition::Exact, 0.0, tie_tol)
}

pub fn audit_choice(
    trace: &Trace,
    qstar: &QTable,
    alpha: f64,
    tie_tol: f64,
) -> Result<FairnessReport> {
    audit(trace, qstar, Definition::Choice, alpha, tie_tol)
}

pub fn audit_action(
    trace: &Trace,
    qstar: &QTable,
    alpha: f64,
    tie_tol: f64,
) -> Result<FairnessReport> {
    audit(trace, qstar, Definition::Action, alpha, tie_tol)
}

/// Audits a stationary policy at every state, as if each state were visited
/// once (step `t` is the state index).
pub fn audit_policy(
    pi: &StochasticPolicy,
    qstar: &QTable,
    def: Definition,
    alpha: f64,
    tie_tol: f64,
) -> Result<FairnessReport> {
    if pi.n() != qstar.n() {
        return Err(Error::DimensionMismatch(format!(
            "policy has {} states, Q table {}",
            pi.n(),
            qstar.n()
        )));
    }
    let steps: Vec<TraceStep> = (0..pi.n())
        .map(|s| TraceStep {
            t: s,
            state: s,
            dist: pi.row(s).to_vec(),
            action: 0,
            reward: 0.0,
        })
        .collect();
    audit_steps(&steps, qstar, def, alpha, tie_tol)
}

/// A learner configuration is delta-compliant when the fraction of failing
/// seeds is at most `delta + 3 sqrt(delta (1 - delta) / N)`.
pub fn delta_compliant(failures: usize, seeds: usize, delta: f64) -> bool {
    if seeds == 0 {
        return false;
    }
    let n = seeds as f64;
    failures as f64 / n <= delta + 3.0 * (delta * (1.0 - delta) / n).sqrt()
}

/// `{a : Q(s,a) >= max_a' Q(s,a') - alpha - tie_tol}` for every state.
pub fn allowed_actions(q: &QTable, alpha: f64, tie_tol: f64) -> Vec<Vec<usize>> {
    (0..q.n())
        .map(|s| q.argmax_set(s, alpha + tie_tol))
        .collect()
}

/// An MDP whose action sets are pruned per state; action indices stay those
/// of the base MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct RestrictedMdp {
    pub base: Mdp,
    pub allowed: Vec<Vec<usize>>,
}

impl RestrictedMdp {
    pub fn new(base: Mdp, allowed: Vec<Vec<usize>>) -> Result<Self> {
        if allowed.len() != base.n() {
            return Err(Error::DimensionMismatch(format!(
                "{} allowed sets for {} states",
                allowed.len(),
                base.n()
            )));
        }
        if let Some(s) = allowed
            .iter()
            .position(|set| set.is_empty() || set.iter().any(|&a| a >= base.k()))
        {
            return Err(Error::InvalidParameter(format!(
                "allowed set of state {s} is empty or out of range"
            )));
        }
        Ok(RestrictedMdp { base, allowed })
    }

    pub fn allowed(&self, s: usize) -> &[usize] {
        &self.allowed[s]
    }

    pub fn is_allowed(&self, s: usize, a: usize) -> bool {
        self.allowed[s].contains(&a)
    }

    /// Optimal values using only allowed actions.
    pub fn plan(&self, tol: f64) -> Result<(ValueTable, QTable)> {
        value_iteration_restricted(&self.base, &self.allowed, tol)
    }

    pub fn uniform_policy(&self) -> StochasticPolicy {
        StochasticPolicy::uniform_over(&self.allowed, self.base.k())
    }
}

pub fn restrict_mdp(m: &Mdp, qstar: &QTable, alpha: f64, tie_tol: f64) -> Result<RestrictedMdp> {
    check_params(alpha, tie_tol)?;
    if qstar.n() != m.n() || qstar.k() != m.k() {
        return Err(Error::DimensionMismatch(format!(
            "Q table is {}x{}, MDP is {}x{}",
            qstar.n(),
            qstar.k(),
            m.n(),
            m.k()
        )));
    }
    RestrictedMdp::new(m.clone(), allowed_actions(qstar, alpha, tie_tol))
}

/// Uniform over the `Q*` argmax set (at `tie_tol`) in every state.
pub fn fair_optimal_policy(m: &Mdp, qstar: &QTable, tie_tol: f64) -> Result<StochasticPolicy> {
    Ok(restrict_mdp(m, qstar, 0.0, tie_tol)?.uniform_policy())
}
