use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{known_thresholds, Thresholds};
use crate::fairness::DEFAULT_TIE_TOL;
use crate::mdp::Mdp;
use crate::planning::{horizon_time, DEFAULT_PLAN_TOL};

/// Where the learner's `Q*` estimates and models come from.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum EstimateSource {
    /// Plug-in estimates from the learner's own samples.
    #[default]
    Learned,
    /// The true model, for testing the planning and fairness logic in
    /// isolation from estimation error.
    Oracle(Box<Mdp>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EscapeMode {
    /// Distribution evolution on the estimated model.
    #[default]
    Exact,
    /// Fraction of `reps` simulated walks on the estimated model.
    MonteCarlo { reps: u64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FairE3Config {
    pub eps: f64,
    pub alpha: f64,
    pub delta: f64,
    pub gamma: f64,
    /// Mixing time of the optimal policy if known; `None` runs the guesses
    /// 1, 2, ... sequentially.
    pub tstar: Option<u64>,
    pub thresholds: Thresholds,
    /// Length of each random trajectory.
    pub horizon: u64,
    /// Exploration threshold is `beta / (4 T)`.
    pub beta: f64,
    pub tie_tol: f64,
    pub plan_tol: f64,
    /// Exploitation phases between checks of the current guess in sequential mode.
    pub min_exploit_phases: u64,
    pub escape: EscapeMode,
    /// Seeds the Monte Carlo escape estimates.
    pub mc_seed: u64,
    pub estimates: EstimateSource,
}

impl FairE3Config {
    /// Defaults: `H = horizon_time(eps, gamma)`, `beta = eps`,
    /// `min_exploit_phases = ceil(ln(1/delta) / eps^2)`.
    pub fn new(
        eps: f64,
        alpha: f64,
        delta: f64,
        gamma: f64,
        tstar: Option<u64>,
        thresholds: Thresholds,
    ) -> Result<Self> {
        check_core(eps, alpha, delta, gamma)?;
        let cfg = FairE3Config {
            eps,
            alpha,
            delta,
            gamma,
            tstar,
            thresholds,
            horizon: horizon_time(eps, gamma.max(f64::MIN_POSITIVE))?,
            beta: eps,
            tie_tol: DEFAULT_TIE_TOL,
            plan_tol: DEFAULT_PLAN_TOL,
            min_exploit_phases: ((1.0 / delta).ln() / (eps * eps)).ceil().max(1.0) as u64,
            escape: EscapeMode::Exact,
            mc_seed: 0,
            estimates: EstimateSource::Learned,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Thresholds from the known-state formulas for an `n x k` instance.
    pub fn formula_thresholds(&self, n: usize, k: usize, scale: f64) -> Result<Thresholds> {
        known_thresholds(
            n,
            k,
            self.horizon,
            self.alpha,
            self.eps,
            self.gamma,
            self.delta,
            scale,
        )
    }

    pub fn validate(&self) -> Result<()> {
        check_core(self.eps, self.alpha, self.delta, self.gamma)?;
        if self.tstar == Some(0) {
            return Err(Error::InvalidParameter("T* must be at least 1".into()));
        }
        if self.horizon == 0 || self.thresholds.mq == 0 || self.min_exploit_phases == 0 {
            return Err(Error::InvalidParameter(
                "horizon, mQ and phase counts must be positive".into(),
            ));
        }
        if !(self.beta > 0.0) || !(self.tie_tol >= 0.0) || !(self.plan_tol > 0.0) {
            return Err(Error::InvalidParameter(
                "need beta > 0, tie_tol >= 0, plan_tol > 0".into(),
            ));
        }
        if let EscapeMode::MonteCarlo { reps: 0 } = self.escape {
            return Err(Error::InvalidParameter(
                "Monte Carlo escape needs at least one walk".into(),
            ));
        }
        if let EstimateSource::Oracle(m) = &self.estimates {
            if (m.gamma() - self.gamma).abs() > 0.0 {
                return Err(Error::InvalidParameter(
                    "oracle model discount differs from gamma".into(),
                ));
            }
        }
        Ok(())
    }

    /// Explorations needed so that enough trajectories get taken:
    /// `ceil(T n mQ / eps * ln(n / delta))`, saturating.
    pub fn exploration_budget(&self, n: usize, tstar: u64) -> u64 {
        let x = tstar as f64 * n as f64 * self.thresholds.mq as f64 / self.eps
            * (n as f64 / self.delta).ln();
        if x >= u64::MAX as f64 {
            u64::MAX
        } else {
            x.ceil() as u64
        }
    }
}

fn check_core(eps: f64, alpha: f64, delta: f64, gamma: f64) -> Result<()> {
    if !(eps > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need eps, alpha > 0, got {eps}, {alpha}"
        )));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "delta = {delta} outside (0, 1/2)"
        )));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidParameter(format!(
            "gamma = {gamma} outside [0, 1)"
        )));
    }
    Ok(())
}
