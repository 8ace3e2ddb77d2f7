//! Finite tabular MDPs with state-attached rewards.
//!
//! Rewards belong to states. The reward of the current state accrues at the
//! current step, so a path `s_1, s_2, ...` is worth `sum_t gamma^(t-1) R(s_t)`.

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row sums must be within this of one.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "param", rename_all = "snake_case")]
pub enum RewardDist {
    PointMass(f64),
    Bernoulli(f64),
}

impl RewardDist {
    pub fn mean(&self) -> f64 {
        match *self {
            RewardDist::PointMass(v) => v,
            RewardDist::Bernoulli(p) => p,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            RewardDist::PointMass(v) => v,
            RewardDist::Bernoulli(p) => {
                if rng.gen::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn param(&self) -> f64 {
        self.mean()
    }
}

/// Read access to a transition kernel plus mean rewards.
///
/// Implemented by [`Mdp`] and by the empirical models built from samples, so
/// the induced-MDP constructions work on either.
pub trait TransitionModel {
    fn n(&self) -> usize;
    fn k(&self) -> usize;
    fn row(&self, s: usize, a: usize) -> &[f64];
    fn mean_reward(&self, s: usize) -> f64;
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mdp {
    n: usize,
    k: usize,
    gamma: f64,
    /// Flat `(s, a, s')` tensor.
    p: Vec<f64>,
    rewards: Vec<RewardDist>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    Shape(String),
    NegativeProbability {
        state: usize,
        action: usize,
        next: usize,
        value: f64,
    },
    RowSum {
        state: usize,
        action: usize,
        sum: f64,
    },
    RewardParameter {
        state: usize,
        value: f64,
    },
    Discount(f64),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Shape(msg) => write!(f, "shape: {msg}"),
            Violation::NegativeProbability {
                state,
                action,
                next,
                value,
            } => write!(f, "P[{state}][{action}][{next}] = {value} is negative"),
            Violation::RowSum { state, action, sum } => {
                write!(f, "P[{state}][{action}] sums to {sum}, expected 1")
            }
            Violation::RewardParameter { state, value } => {
                write!(f, "R[{state}] parameter {value} outside [0, 1]")
            }
            Violation::Discount(g) => write!(f, "gamma = {g} outside [0, 1)"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return write!(f, "ok");
        }
        let parts: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join("; "))
    }
}

impl Mdp {
    /// Builds and validates an MDP from a flat `(s, a, s')` transition tensor.
    pub fn new(
        n: usize,
        k: usize,
        gamma: f64,
        p: Vec<f64>,
        rewards: Vec<RewardDist>,
    ) -> Result<Self> {
        let m = Self::new_unchecked(n, k, gamma, p, rewards);
        let report = validate_mdp(&m);
        if report.is_ok() {
            Ok(m)
        } else {
            Err(Error::InvalidMdp(report.to_string()))
        }
    }

    /// Builds an MDP without checking any invariant. Use [`validate_mdp`] to inspect it.
    pub fn new_unchecked(
        n: usize,
        k: usize,
        gamma: f64,
        p: Vec<f64>,
        rewards: Vec<RewardDist>,
    ) -> Self {
        Mdp {
            n,
            k,
            gamma,
            p,
            rewards,
        }
    }

    /// Builds from nested `[s][a][s']` rows.
    pub fn from_rows(
        gamma: f64,
        rows: Vec<Vec<Vec<f64>>>,
        rewards: Vec<RewardDist>,
    ) -> Result<Self> {
        let n = rows.len();
        let k = rows.first().map_or(0, |r| r.len());
        let mut p = Vec::with_capacity(n * k * n);
        for (s, per_state) in rows.iter().enumerate() {
            if per_state.len() != k {
                return Err(Error::InvalidMdp(format!(
                    "P[{s}] has {} actions, expected {k}",
                    per_state.len()
                )));
            }
            for (a, row) in per_state.iter().enumerate() {
                if row.len() != n {
                    return Err(Error::InvalidMdp(format!(
                        "P[{s}][{a}] has length {}, expected {n}",
                        row.len()
                    )));
                }
                p.extend_from_slice(row);
            }
        }
        Mdp::new(n, k, gamma, p, rewards)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.k + a) * self.n;
        &self.p[start..start + self.n]
    }

    pub fn prob(&self, s: usize, a: usize, next: usize) -> f64 {
        self.p[(s * self.k + a) * self.n + next]
    }

    pub fn reward(&self, s: usize) -> RewardDist {
        self.rewards[s]
    }

    pub fn rewards(&self) -> &[RewardDist] {
        &self.rewards
    }

    pub fn mean_reward(&self, s: usize) -> f64 {
        self.rewards[s].mean()
    }

    pub fn mean_rewards(&self) -> Vec<f64> {
        self.rewards.iter().map(RewardDist::mean).collect()
    }

    pub fn transitions(&self) -> &[f64] {
        &self.p
    }

    pub fn with_gamma(&self, gamma: f64) -> Result<Self> {
        Mdp::new(self.n, self.k, gamma, self.p.clone(), self.rewards.clone())
    }

    pub fn with_rewards(&self, rewards: Vec<RewardDist>) -> Result<Self> {
        Mdp::new(self.n, self.k, self.gamma, self.p.clone(), rewards)
    }

    pub fn to_file(&self) -> MdpFile {
        let p = (0..self.n)
            .map(|s| (0..self.k).map(|a| self.row(s, a).to_vec()).collect())
            .collect();
        MdpFile {
            n: self.n,
            k: self.k,
            gamma: self.gamma,
            p,
            r: self.rewards.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("MDP serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: MdpFile = serde_json::from_str(text)?;
        file.into_mdp()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

impl TransitionModel for Mdp {
    fn n(&self) -> usize {
        self.n
    }
    fn k(&self) -> usize {
        self.k
    }
    fn row(&self, s: usize, a: usize) -> &[f64] {
        Mdp::row(self, s, a)
    }
    fn mean_reward(&self, s: usize) -> f64 {
        Mdp::mean_reward(self, s)
    }
}

/// On-disk layout: `{n, k, gamma, P: [n][k][n], R: [{kind, param}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MdpFile {
    pub n: usize,
    pub k: usize,
    pub gamma: f64,
    #[serde(rename = "P")]
    pub p: Vec<Vec<Vec<f64>>>,
    #[serde(rename = "R")]
    pub r: Vec<RewardDist>,
}

impl MdpFile {
    pub fn into_mdp(self) -> Result<Mdp> {
        if self.p.len() != self.n {
            return Err(Error::InvalidMdp(format!(
                "field P has {} states, field n says {}",
                self.p.len(),
                self.n
            )));
        }
        if self.r.len() != self.n {
            return Err(Error::InvalidMdp(format!(
                "field R has {} entries, field n says {}",
                self.r.len(),
                self.n
            )));
        }
        if let Some(s) = self.p.iter().position(|row| row.len() != self.k) {
            return Err(Error::InvalidMdp(format!(
                "field P[{s}] has {} actions, field k says {}",
                self.p[s].len(),
                self.k
            )));
        }
        Mdp::from_rows(self.gamma, self.p, self.r)
    }
}

pub fn validate_mdp(m: &Mdp) -> ValidationReport {
    let mut violations = Vec::new();
    if m.n == 0 || m.k == 0 {
        violations.push(Violation::Shape(format!(
            "n = {}, k = {} must be positive",
            m.n, m.k
        )));
    }
    if m.p.len() != m.n * m.k * m.n {
        violations.push(Violation::Shape(format!(
            "transition tensor has {} entries, expected {}",
            m.p.len(),
            m.n * m.k * m.n
        )));
    }
    if m.rewards.len() != m.n {
        violations.push(Violation::Shape(format!(
            "{} reward distributions for {} states",
            m.rewards.len(),
            m.n
        )));
    }
    if !(0.0..1.0).contains(&m.gamma) {
        violations.push(Violation::Discount(m.gamma));
    }
    if !violations.iter().any(|v| matches!(v, Violation::Shape(_))) {
        for s in 0..m.n {
            for a in 0..m.k {
                let row = m.row(s, a);
                for (next, &value) in row.iter().enumerate() {
                    if value < 0.0 || !value.is_finite() {
                        violations.push(Violation::NegativeProbability {
                            state: s,
                            action: a,
                            next,
                            value,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL || !sum.is_finite() {
                    violations.push(Violation::RowSum {
                        state: s,
                        action: a,
                        sum,
                    });
                }
            }
        }
    }
    for (s, r) in m.rewards.iter().enumerate() {
        let v = r.param();
        if !(0.0..=1.0).contains(&v) {
            violations.push(Violation::RewardParameter { state: s, value: v });
        }
    }
    ValidationReport { violations }
}

/// Draws an index from a probability vector by inverse CDF on `u` in `[0, 1)`.
///
/// Never returns an index with zero probability.
pub fn sample_index(dist: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in dist.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> Mdp {
        Mdp::from_rows(
            0.9,
            vec![
                vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                vec![vec![0.5, 0.5], vec![0.0, 1.0]],
            ],
            vec![RewardDist::PointMass(0.2), RewardDist::Bernoulli(0.7)],
        )
        .unwrap()
    }

    #[test]
    fn row_sum_violation_is_reported_with_indices() {
        let m = Mdp::new_unchecked(
            3,
            1,
            0.9,
            vec![1.0, 0.0, 0.0, 0.6, 0.6, 0.0, 0.0, 0.0, 1.0],
            vec![RewardDist::PointMass(0.5); 3],
        );
        let report = validate_mdp(&m);
        assert_eq!(report.violations.len(), 1);
        match &report.violations[0] {
            Violation::RowSum { state, action, sum } => {
                assert_eq!((*state, *action), (1, 0));
                assert!((sum - 1.2).abs() < 1e-12);
            }
            other => panic!("unexpected violation {other:?}"),
        }
    }

    #[test]
    fn discount_of_one_is_rejected() {
        let m = Mdp::new_unchecked(1, 1, 1.0, vec![1.0], vec![RewardDist::PointMass(0.0)]);
        let report = validate_mdp(&m);
        assert_eq!(report.violations, vec![Violation::Discount(1.0)]);
        assert!(Mdp::new(1, 1, 1.0, vec![1.0], vec![RewardDist::PointMass(0.0)]).is_err());
    }

    #[test]
    fn reward_outside_unit_interval_is_rejected() {
        let m = Mdp::new_unchecked(1, 1, 0.5, vec![1.0], vec![RewardDist::Bernoulli(1.5)]);
        assert!(matches!(
            validate_mdp(&m).violations[0],
            Violation::RewardParameter { state: 0, .. }
        ));
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let m = two_state();
        let text = m.to_json();
        assert!(text.contains("\"P\""));
        assert!(text.contains("\"kind\": \"bernoulli\""));
        assert_eq!(Mdp::from_json(&text).unwrap(), m);
    }

    #[test]
    fn malformed_file_names_the_field() {
        let err = Mdp::from_json(r#"{"n": 2, "k": 1, "gamma": 0.5, "P": [[[1.0, 0.0]]], "R": []}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("field P"), "{err}");
        let err = Mdp::from_json(r#"{"n": 1, "k": 1, "gamma": 0.5, "R": []}"#)
            .unwrap_err()
            .to_string();
        assert!(err.contains("`P`"), "{err}");
    }

    #[test]
    fn sample_index_skips_zero_mass() {
        assert_eq!(sample_index(&[0.0, 1.0], 0.0), 1);
        assert_eq!(sample_index(&[0.5, 0.5], 0.49), 0);
        assert_eq!(sample_index(&[0.5, 0.5], 0.5), 1);
        // rounding shortfall falls back to the last positive entry
        assert_eq!(sample_index(&[0.3, 0.3, 0.0], 0.9999), 1);
    }
}
