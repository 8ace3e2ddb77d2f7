mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fair_mdp::markov::{state_transition_matrix, stationary_distribution, step_distribution};
use fair_mdp::planning::{bellman_residual, policy_evaluation, value_iteration};
use fair_mdp::sim::{satinder_residual, simulate};
use fair_mdp::{Mdp, RewardDist, StochasticPolicy};

use common::{random_mdp, random_policy};

const TOL: f64 = 1e-9;

fn instance() -> impl Strategy<Value = (Mdp, u64)> {
    (1usize..=6, 1usize..=4, 0.0f64..0.99, any::<u64>()).prop_map(|(n, k, gamma, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (random_mdp(&mut rng, n, k, gamma), seed)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn value_iteration_is_a_fixed_point((m, _) in instance()) {
        let (v, q) = value_iteration(&m, TOL).unwrap();
        prop_assert!(bellman_residual(&m, &v) <= TOL);
        for s in 0..m.n() {
            prop_assert!((q.max(s) - v.get(s)).abs() <= 2.0 * TOL);
            prop_assert!(v.get(s) >= -TOL && v.get(s) <= 1.0 / (1.0 - m.gamma()) + TOL);
        }
    }

    #[test]
    fn reward_bump_never_lowers_values((m, seed) in instance(), bump in 0.0f64..1.0) {
        let s = (seed as usize) % m.n();
        let mut rewards = m.rewards().to_vec();
        rewards[s] = RewardDist::Bernoulli((m.mean_reward(s) + bump).min(1.0));
        let bumped = m.with_rewards(rewards).unwrap();
        let (v, _) = value_iteration(&m, TOL).unwrap();
        let (vb, _) = value_iteration(&bumped, TOL).unwrap();
        for s in 0..m.n() {
            prop_assert!(vb.get(s) >= v.get(s) - 2.0 * TOL);
        }
    }

    #[test]
    fn stationary_distribution_is_fixed((m, seed) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let pi = random_policy(&mut rng, m.n(), m.k());
        let mu = stationary_distribution(&m, &pi, 1e-12).unwrap();
        let total: f64 = mu.as_slice().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-10);
        let next = step_distribution(mu.as_slice(), &state_transition_matrix(&m, &pi).unwrap());
        let tv: f64 = next.iter().zip(mu.as_slice()).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        prop_assert!(tv <= 1e-10);
    }

    #[test]
    fn average_reward_identity((m, seed) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let pi = random_policy(&mut rng, m.n(), m.k());
        prop_assert!(satinder_residual(&m, &pi, 1e-10).unwrap() <= 1e-6);
    }

    #[test]
    fn policy_values_never_beat_optimal((m, seed) in instance()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let pi = random_policy(&mut rng, m.n(), m.k());
        let (v, _) = value_iteration(&m, TOL).unwrap();
        let (vp, _) = policy_evaluation(&m, &pi, TOL).unwrap();
        for s in 0..m.n() {
            prop_assert!(vp.get(s) <= v.get(s) + 2.0 * TOL);
        }
    }

    #[test]
    fn simulation_is_reproducible((m, seed) in instance(), steps in 1usize..200) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let pi = random_policy(&mut rng, m.n(), m.k());
        let a = simulate(&m, &mut pi.clone(), 0, steps, seed).unwrap();
        let b = simulate(&m, &mut pi.clone(), 0, steps, seed).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn single_state_and_single_action_instances() {
    let m = Mdp::from_rows(
        0.9,
        vec![vec![vec![1.0]; 3]],
        vec![RewardDist::PointMass(0.4)],
    )
    .unwrap();
    let (v, q) = value_iteration(&m, TOL).unwrap();
    assert!((v.get(0) - 4.0).abs() < 1e-8);
    assert!((0..3).all(|a| (q.get(0, a) - 4.0).abs() < 1e-8));

    let m = Mdp::from_rows(
        0.5,
        vec![vec![vec![0.5, 0.5]], vec![vec![1.0, 0.0]]],
        vec![RewardDist::PointMass(1.0), RewardDist::PointMass(0.0)],
    )
    .unwrap();
    let only = StochasticPolicy::uniform(2, 1);
    let (v, _) = value_iteration(&m, TOL).unwrap();
    let (vp, _) = policy_evaluation(&m, &only, TOL).unwrap();
    assert!((v.get(0) - vp.get(0)).abs() < 1e-8 && (v.get(1) - vp.get(1)).abs() < 1e-8);
}
