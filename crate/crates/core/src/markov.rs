//! State chains induced by stationary policies: stationary distributions and
//! mixing times, computed by exact distribution evolution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::policy::StochasticPolicy;

pub const DEFAULT_MIXING_CAP: u64 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StationaryDist(pub Vec<f64>);

impl StationaryDist {
    pub fn get(&self, s: usize) -> f64 {
        self.0[s]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major `n x n` matrix `P_pi(s, s') = sum_a pi(a|s) P(s,a,s')`.
pub fn state_transition_matrix(m: &Mdp, pi: &StochasticPolicy) -> Result<Vec<f64>> {
    if pi.n() != m.n() || pi.k() != m.k() {
        return Err(Error::DimensionMismatch(format!(
            "policy is {}x{}, MDP is {}x{}",
            pi.n(),
            pi.k(),
            m.n(),
            m.k()
        )));
    }
    let n = m.n();
    let mut out = vec![0.0; n * n];
    for s in 0..n {
        for a in 0..m.k() {
            let w = pi.prob(s, a);
            if w == 0.0 {
                continue;
            }
            for (next, p) in m.row(s, a).iter().enumerate() {
                out[s * n + next] += w * p;
            }
        }
    }
    Ok(out)
}

/// `d P` for a row vector `d`.
pub fn step_distribution(d: &[f64], matrix: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut out = vec![0.0; n];
    for (s, &w) in d.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (next, o) in out.iter_mut().enumerate() {
            *o += w * matrix[s * n + next];
        }
    }
    out
}

pub fn l1_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

fn mat_mul(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for l in 0..n {
            let w = a[i * n + l];
            if w == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += w * b[l * n + j];
            }
        }
    }
    out
}

const SQUARINGS: usize = 64;

/// Stationary distribution of `pi`, verifying the chain has a single limit.
///
/// Power iteration runs from every start state at once by repeatedly
/// squaring the lazy chain `(I + P) / 2`, which has the same fixed points and
/// no periodicity. Once all start-state rows agree within `tol` (L1) their
/// mean is within `tol` of the stationary distribution. If after `2^64`
/// steps two rows still differ by more than `10 tol`, the policy has more
/// than one closed class and the unichain assumption fails.
pub fn stationary_distribution(m: &Mdp, pi: &StochasticPolicy, tol: f64) -> Result<StationaryDist> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance {tol} must be positive"
        )));
    }
    let n = m.n();
    let mut power = state_transition_matrix(m, pi)?;
    for s in 0..n {
        for j in 0..n {
            power[s * n + j] *= 0.5;
        }
        power[s * n + s] += 0.5;
    }
    let spread = |mat: &[f64]| -> (usize, f64) {
        (1..n)
            .map(|s| (s, l1_distance(&mat[..n], &mat[s * n..(s + 1) * n])))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc })
    };
    let mut converged = false;
    for _ in 0..SQUARINGS {
        if spread(&power).1 <= tol {
            converged = true;
            break;
        }
        power = mat_mul(&power, &power, n);
    }
    if !converged {
        let (second, distance) = spread(&power);
        if distance > 10.0 * tol {
            return Err(Error::UnichainViolation {
                first: 0,
                second,
                distance,
            });
        }
    }
    let mut mu = vec![0.0; n];
    for s in 0..n {
        for (x, p) in mu.iter_mut().zip(&power[s * n..(s + 1) * n]) {
            *x += p / n as f64;
        }
    }
    let total: f64 = mu.iter().sum();
    mu.iter_mut().for_each(|x| *x /= total);
    Ok(StationaryDist(mu))
}

/// Smallest `T >= 1` such that after following `pi` for `T` steps from any
/// start state the state distribution is within `eps` of stationarity in L1.
///
/// The worst-case distance to stationarity is nonincreasing in `T`, so the
/// first `T` found by the scan also satisfies the bound for all later steps.
pub fn mixing_time(m: &Mdp, pi: &StochasticPolicy, eps: f64, cap: u64) -> Result<u64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "eps = {eps} must lie in (0, 1)"
        )));
    }
    let n = m.n();
    let mu = stationary_distribution(m, pi, 1e-12)?;
    let matrix = state_transition_matrix(m, pi)?;
    let mut rows: Vec<Vec<f64>> = (0..n)
        .map(|s| {
            let mut d = vec![0.0; n];
            d[s] = 1.0;
            d
        })
        .collect();
    for t in 1..=cap {
        for row in rows.iter_mut() {
            *row = step_distribution(row, &matrix);
        }
        if rows
            .iter()
            .all(|row| l1_distance(row, mu.as_slice()) <= eps)
        {
            return Ok(t);
        }
    }
    Err(Error::MixingCapExceeded(cap))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::RewardDist;

    fn stay_put() -> Mdp {
        Mdp::new(
            2,
            2,
            0.9,
            vec![1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0],
            vec![RewardDist::PointMass(0.0); 2],
        )
        .unwrap()
    }

    #[test]
    fn two_closed_classes_are_a_unichain_violation() {
        let err = stationary_distribution(&stay_put(), &StochasticPolicy::uniform(2, 2), 1e-10)
            .unwrap_err();
        assert!(matches!(err, Error::UnichainViolation { .. }));
    }

    #[test]
    fn periodic_chain_has_stationary_distribution_but_no_mixing_time() {
        let flip = Mdp::new(
            2,
            1,
            0.5,
            vec![0.0, 1.0, 1.0, 0.0],
            vec![RewardDist::PointMass(0.0); 2],
        )
        .unwrap();
        let pi = StochasticPolicy::uniform(2, 1);
        let mu = stationary_distribution(&flip, &pi, 1e-12).unwrap();
        assert!((mu.get(0) - 0.5).abs() < 1e-10);
        assert!(matches!(
            mixing_time(&flip, &pi, 0.1, 1000),
            Err(Error::MixingCapExceeded(1000))
        ));
    }

    #[test]
    fn fixed_landing_distribution_mixes_in_one_step() {
        let d = [0.2, 0.3, 0.5];
        let mut p = Vec::new();
        for _ in 0..3 * 2 {
            p.extend_from_slice(&d);
        }
        let m = Mdp::new(3, 2, 0.9, p, vec![RewardDist::PointMass(0.5); 3]).unwrap();
        let pi = StochasticPolicy::uniform(3, 2);
        assert_eq!(mixing_time(&m, &pi, 1e-6, 100).unwrap(), 1);
        let mu = stationary_distribution(&m, &pi, 1e-12).unwrap();
        assert!(l1_distance(mu.as_slice(), &d) < 1e-10);
    }

    #[test]
    fn single_state_chain() {
        let m = Mdp::new(1, 2, 0.9, vec![1.0, 1.0], vec![RewardDist::PointMass(0.5)]).unwrap();
        let pi = StochasticPolicy::uniform(1, 2);
        assert_eq!(
            stationary_distribution(&m, &pi, 1e-10).unwrap().0,
            vec![1.0]
        );
        assert_eq!(mixing_time(&m, &pi, 0.5, 10).unwrap(), 1);
    }
}
