//! Random instances shared by the integration tests.
#![allow(dead_code)]

use fair_mdp::{Mdp, RewardDist, StochasticPolicy};
use rand::Rng;
use rand_distr::{Distribution, Exp1};

/// A draw from the flat Dirichlet distribution on `len` outcomes.
pub fn dirichlet<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / total).collect()
}

/// Dirichlet transition rows and Bernoulli rewards with uniform means.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize, gamma: f64) -> Mdp {
    let rows = (0..n)
        .map(|_| (0..k).map(|_| dirichlet(rng, n)).collect())
        .collect();
    let rewards = (0..n)
        .map(|_| RewardDist::Bernoulli(rng.gen::<f64>()))
        .collect();
    Mdp::from_rows(gamma, rows, rewards).expect("valid random MDP")
}

pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, n: usize, k: usize) -> StochasticPolicy {
    StochasticPolicy::new((0..n).map(|_| dirichlet(rng, k)).collect()).expect("valid policy")
}

/// Random distribution supported on `sets[s]` at each state.
pub fn random_policy_within<R: Rng + ?Sized>(
    rng: &mut R,
    sets: &[Vec<usize>],
    k: usize,
) -> StochasticPolicy {
    let rows = sets
        .iter()
        .map(|set| {
            let w = dirichlet(rng, set.len());
            let mut row = vec![0.0; k];
            for (&a, p) in set.iter().zip(w) {
                row[a] = p;
            }
            row
        })
        .collect();
    StochasticPolicy::new(rows).expect("valid policy")
}

/// Mixes every transition row and reward mean with a random one so that no
/// entry moves by more than `beta`.
pub fn perturb<R: Rng + ?Sized>(rng: &mut R, m: &Mdp, beta: f64) -> Mdp {
    let lambda = beta / 2.0;
    let rows = (0..m.n())
        .map(|s| {
            (0..m.k())
                .map(|a| {
                    let q = dirichlet(rng, m.n());
                    m.row(s, a)
                        .iter()
                        .zip(q)
                        .map(|(p, q)| (1.0 - lambda) * p + lambda * q)
                        .collect()
                })
                .collect()
        })
        .collect();
    let rewards = (0..m.n())
        .map(|s| {
            let r = m.mean_reward(s) + rng.gen_range(-lambda..=lambda);
            RewardDist::Bernoulli(r.clamp(0.0, 1.0))
        })
        .collect();
    Mdp::from_rows(m.gamma(), rows, rewards).expect("valid perturbed MDP")
}
