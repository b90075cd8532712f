use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmab_core::model::{Action, ArmModel};
use rmab_core::policies::{
    myopic_action, rollout_action, rollout_value_estimate, whittle_action, ArmSet, IndexTable,
    JointState, RmabInstance, RolloutConfig,
};
use rmab_core::solver::SolverConfig;

fn two_by_two() -> RmabInstance {
    let a = ArmModel::new(
        vec![vec![0.7, 0.3], vec![0.2, 0.8]],
        vec![vec![0.1, 0.9], vec![0.6, 0.4]],
        vec![[0.1, 0.5], [0.3, 0.9]],
        0.9,
    )
    .unwrap();
    let b = ArmModel::new(
        vec![vec![0.5, 0.5], vec![0.35, 0.65]],
        vec![vec![0.8, 0.2], vec![0.45, 0.55]],
        vec![[0.0, 0.7], [0.4, 0.2]],
        0.9,
    )
    .unwrap();
    RmabInstance::new(vec![a, b], 1).unwrap()
}

fn myopic_pick(inst: &RmabInstance, states: &[usize]) -> Vec<usize> {
    myopic_action(inst, &JointState::new(inst, states.to_vec()).unwrap()).arms().to_vec()
}

fn reward(inst: &RmabInstance, states: &[usize], played: &[usize]) -> f64 {
    inst.arms()
        .iter()
        .zip(states)
        .enumerate()
        .map(|(n, (arm, &s))| {
            let a = if played.contains(&n) { Action::Active } else { Action::Passive };
            arm.reward(s, a)
        })
        .sum()
}

/// Exact `H`-step return: first `initial`, then myopic, summing over every
/// joint transition.
fn exact_lookahead(inst: &RmabInstance, states: &[usize], initial: &[usize], h: usize) -> f64 {
    let now = reward(inst, states, initial);
    if h == 1 {
        return now;
    }
    let mut future = 0.0;
    let k: Vec<usize> = inst.arms().iter().map(|a| a.num_states()).collect();
    let total: usize = k.iter().product();
    for code in 0..total {
        let mut rest = code;
        let mut next = Vec::with_capacity(k.len());
        let mut prob = 1.0;
        for (n, arm) in inst.arms().iter().enumerate() {
            let j = rest % k[n];
            rest /= k[n];
            let a = if initial.contains(&n) { Action::Active } else { Action::Passive };
            prob *= arm.transition(a, states[n], j);
            next.push(j);
        }
        if prob > 0.0 {
            let follow = myopic_pick(inst, &next);
            future += prob * exact_lookahead(inst, &next, &follow, h - 1);
        }
    }
    now + inst.discount() * future
}

#[test]
fn estimate_matches_enumeration() {
    let inst = two_by_two();
    for states in [[0, 0], [0, 1], [1, 0], [1, 1]] {
        let x = JointState::new(&inst, states.to_vec()).unwrap();
        for arm in 0..2 {
            let exact = exact_lookahead(&inst, &states, &[arm], 2);
            let cfg = RolloutConfig {
                horizon: 2,
                trajectories: 100_000,
                candidate_limit: None,
                seed: 3,
            };
            let est = rollout_value_estimate(&inst, &x, &ArmSet::new(vec![arm]), &cfg, &mut cfg.rng())
                .unwrap();
            assert!(
                (est.mean - exact).abs() <= 3.0 * est.std_error,
                "{states:?}/{arm}: {} vs {exact} (se {})",
                est.mean,
                est.std_error
            );
        }
    }
}

#[test]
fn estimate_error_shrinks_with_more_trajectories() {
    let inst = two_by_two();
    let x = JointState::new(&inst, vec![0, 1]).unwrap();
    let exact = exact_lookahead(&inst, &[0, 1], &[1], 2);
    let mut last_se = f64::INFINITY;
    for l in [1_000, 10_000, 100_000] {
        let cfg = RolloutConfig {
            horizon: 2,
            trajectories: l,
            candidate_limit: None,
            seed: 17,
        };
        let est =
            rollout_value_estimate(&inst, &x, &ArmSet::new(vec![1]), &cfg, &mut cfg.rng()).unwrap();
        assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "L = {l}");
        assert!(est.std_error < last_se);
        last_se = est.std_error;
    }
}

#[test]
fn one_step_horizon_is_the_immediate_reward() {
    let inst = two_by_two();
    let x = JointState::new(&inst, vec![1, 0]).unwrap();
    let cfg = RolloutConfig {
        horizon: 1,
        trajectories: 5,
        candidate_limit: None,
        seed: 0,
    };
    let est = rollout_value_estimate(&inst, &x, &ArmSet::new(vec![0]), &cfg, &mut cfg.rng()).unwrap();
    assert_eq!(est.mean, 0.9 + 0.0);
    assert_eq!(est.std_error, 0.0);
}

#[test]
fn trajectory_steps_per_decision_are_n_h_l() {
    let inst = two_by_two();
    let x = JointState::new(&inst, vec![0, 0]).unwrap();
    for (h, l) in [(1, 1), (2, 10), (4, 30), (7, 3)] {
        let cfg = RolloutConfig {
            horizon: h,
            trajectories: l,
            candidate_limit: None,
            seed: 1,
        };
        let d = rollout_action(&inst, &x, &cfg, &mut cfg.rng()).unwrap();
        assert_eq!(d.trajectory_steps, (inst.num_arms() * h * l) as u64);
    }
}

/// Arm 1 pays 0.5 now and never changes; arm 2 pays 0.1 now but a single
/// play moves it to an absorbing state paying 1 under either action.
fn trap_instance() -> RmabInstance {
    let steady = ArmModel::new(vec![vec![1.0]], vec![vec![1.0]], vec![[0.0, 0.5]], 0.9).unwrap();
    let unlock = ArmModel::new(
        vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        vec![[0.0, 0.1], [1.0, 1.0]],
        0.9,
    )
    .unwrap();
    RmabInstance::new(vec![steady, unlock], 1).unwrap()
}

/// Optimal `h`-step value on a deterministic instance, by full recursion.
fn optimal_value(inst: &RmabInstance, states: &[usize], h: usize) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for arm in 0..inst.num_arms() {
        let now = reward(inst, states, &[arm]);
        let next: Vec<usize> = inst
            .arms()
            .iter()
            .enumerate()
            .map(|(n, m)| {
                let a = if n == arm { Action::Active } else { Action::Passive };
                (0..m.num_states()).find(|&j| m.transition(a, states[n], j) == 1.0).unwrap()
            })
            .collect();
        let v = now + if h > 1 { inst.discount() * optimal_value(inst, &next, h - 1).0 } else { 0.0 };
        if v > best.0 {
            best = (v, arm);
        }
    }
    best
}

#[test]
fn rollout_escapes_the_myopic_trap() {
    let inst = trap_instance();
    let x = JointState::new(&inst, vec![0, 0]).unwrap();
    assert_eq!(myopic_action(&inst, &x).one_based(), vec![1]);
    let cfg = RolloutConfig {
        horizon: 3,
        trajectories: 4,
        candidate_limit: None,
        seed: 9,
    };
    let d = rollout_action(&inst, &x, &cfg, &mut cfg.rng()).unwrap();
    assert_eq!(d.arms.one_based(), vec![2]);
    assert_eq!(optimal_value(&inst, &[0, 0], 3).1, 1);
    // deterministic, so estimates are exact
    for c in &d.candidates {
        let exact = exact_lookahead(&inst, &[0, 0], c.arms.arms(), 3);
        assert!((c.lookahead_only() - exact).abs() < 1e-12);
        assert!((c.score - (c.immediate + 0.9 * exact)).abs() < 1e-12);
    }
}

#[test]
fn whittle_equals_myopic_when_index_is_the_active_reward() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pool: Vec<f64> = (0..24).map(|i| 0.04 * i as f64).collect();
    let arms: Vec<ArmModel> = (0..4)
        .map(|_| {
            let k = 3;
            let p: Vec<Vec<f64>> = (0..k)
                .map(|_| {
                    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 0.01).collect();
                    let s: f64 = w.iter().sum();
                    w.iter().map(|x| x / s).collect()
                })
                .collect();
            let r = (0..k)
                .map(|_| [0.0, pool.swap_remove(rng.gen_range(0..pool.len()))])
                .collect();
            ArmModel::new(p.clone(), p, r, 0.9).unwrap()
        })
        .collect();
    for m in 1..=3 {
        let inst = RmabInstance::new(arms.clone(), m).unwrap();
        let table = IndexTable::compute(&inst, &SolverConfig::default()).unwrap();
        for code in 0..81 {
            let states: Vec<usize> = (0..4).map(|n| code / 3usize.pow(n) % 3).collect();
            let x = JointState::new(&inst, states).unwrap();
            assert_eq!(whittle_action(&inst, &x, &table).unwrap(), myopic_action(&inst, &x));
        }
    }
}

#[test]
fn every_decision_plays_exactly_m_arms() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let arms: Vec<ArmModel> = (0..5)
        .map(|_| {
            let p = vec![vec![0.5, 0.5], vec![0.3, 0.7]];
            let r = vec![[rng.gen(), rng.gen()], [rng.gen(), rng.gen()]];
            ArmModel::new(p.clone(), p, r, 0.95).unwrap()
        })
        .collect();
    for m in 1..=5 {
        let inst = RmabInstance::new(arms.clone(), m).unwrap();
        let cfg = RolloutConfig {
            horizon: 3,
            trajectories: 5,
            candidate_limit: Some(4),
            seed: 2,
        };
        for code in 0..32 {
            let states: Vec<usize> = (0..5).map(|n| code >> n & 1).collect();
            let x = JointState::new(&inst, states).unwrap();
            assert_eq!(myopic_action(&inst, &x).len(), m);
            let d = rollout_action(&inst, &x, &cfg, &mut rng).unwrap();
            assert_eq!(d.arms.len(), m);
            assert!(d.candidates.iter().all(|c| c.arms.len() == m));
        }
    }
}

#[test]
fn fixed_seed_repeats_the_decision() {
    let inst = two_by_two();
    let x = JointState::new(&inst, vec![1, 1]).unwrap();
    let cfg = RolloutConfig {
        horizon: 5,
        trajectories: 50,
        candidate_limit: None,
        seed: 123,
    };
    let a = rollout_action(&inst, &x, &cfg, &mut cfg.rng()).unwrap();
    let b = rollout_action(&inst, &x, &cfg, &mut cfg.rng()).unwrap();
    assert_eq!(a, b);
}
