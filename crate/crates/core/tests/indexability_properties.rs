mod common;

use common::{random_kernel, random_model, random_row, stochastically_monotone_kernel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rmab_core::indexability::{
    analyze, compute_policy_matrix, compute_whittle_indices, indexability_both_ways,
    verify_indexability, IndexFlag, PolicyMatrix, SubsidyGrid,
};
use rmab_core::model::{Action, ArmModel};
use rmab_core::solver::{solve_value_function, SolverConfig};
use rmab_core::structure::check_structural_conditions;

#[test]
fn identical_kernels_give_reward_gap_as_index() {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..50 {
        let k = rng.gen_range(1..=6);
        let p = random_kernel(&mut rng, k);
        let r: Vec<[f64; 2]> = (0..k)
            .map(|_| [rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5)])
            .collect();
        let m = ArmModel::new(p.clone(), p, r.clone(), 0.9).unwrap();
        let grid = SubsidyGrid::default_for(&m);
        let report = compute_whittle_indices(&m, &grid, &cfg, true).unwrap();
        assert!(report.indexable, "model {i}");
        for (s, idx) in report.whittle_index.iter().enumerate() {
            assert_eq!(idx.flag, IndexFlag::Interior);
            let gap = r[s][1] - r[s][0];
            assert!(
                (idx.value - gap).abs() <= 2.0 * idx.bracket_width,
                "model {i}, state {}: index {} vs gap {gap} (bracket {})",
                s + 1,
                idx.value,
                idx.bracket_width
            );
        }
    }
}

#[test]
fn fixed_gaps_on_shared_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let p = random_kernel(&mut rng, 3);
    let m = ArmModel::new(p.clone(), p, vec![[0.0, 0.2], [0.1, 0.6], [-0.3, 0.5]], 0.8).unwrap();
    let report =
        compute_whittle_indices(&m, &SubsidyGrid::default_for(&m), &SolverConfig::default(), true)
            .unwrap();
    for (idx, want) in report.whittle_index.iter().zip([0.2, 0.5, 0.8]) {
        assert!((idx.value - want).abs() <= idx.bracket_width.max(1e-12));
    }
}

fn random_actions(rng: &mut ChaCha8Rng, k: usize, j: usize) -> Vec<Vec<u8>> {
    (0..k)
        .map(|_| {
            // mostly monotone rows, with occasional flips
            let cut = rng.gen_range(0..=j);
            (0..j)
                .map(|c| {
                    let a = u8::from(c < cut);
                    if rng.gen_bool(0.05) {
                        1 - a
                    } else {
                        a
                    }
                })
                .collect()
        })
        .collect()
}

#[test]
fn row_and_set_characterisations_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let cfg = SolverConfig::default();
    let mut seen = [0usize; 2];
    for _ in 0..150 {
        let k = rng.gen_range(1..=6);
        let j = rng.gen_range(2..=15);
        let grid = SubsidyGrid::linspace(-1.0, 1.0, j).unwrap();
        let phi = PolicyMatrix::from_actions(grid, random_actions(&mut rng, k, j)).unwrap();
        let (rows, sets) = indexability_both_ways(&phi);
        assert_eq!(rows, sets);
        let report = verify_indexability(&phi);
        assert_eq!(report.indexable, rows);
        assert_eq!(report.witnesses.is_empty(), report.indexable);
        seen[usize::from(rows)] += 1;
    }
    for i in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + i);
        let k = rng.gen_range(1..=5);
        let m = random_model(&mut rng, k, 0.95);
        let phi = compute_policy_matrix(&m, &SubsidyGrid::linspace(-2.0, 2.0, 41).unwrap(), &cfg)
            .unwrap();
        let (rows, sets) = indexability_both_ways(&phi);
        assert_eq!(rows, sets);
        seen[usize::from(rows)] += 1;
    }
    assert!(seen[0] > 10 && seen[1] > 10, "{seen:?}");
}

#[test]
fn witnesses_are_genuine_one_zero_one_patterns() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let grid = SubsidyGrid::linspace(0.0, 1.0, 12).unwrap();
        let actions = random_actions(&mut rng, 4, 12);
        let phi = PolicyMatrix::from_actions(grid, actions.clone()).unwrap();
        let report = verify_indexability(&phi);
        for w in &report.witnesses {
            let row = &actions[w.state - 1];
            let [a, b, c] = w.positions;
            let (b, c) = (b.unwrap(), c.unwrap());
            match a {
                Some(a) => assert!(a < b && row[a] == 1),
                None => assert!(row[..b].iter().all(|&x| x == 0)),
            }
            assert!(b < c);
            assert_eq!([row[b], row[c]], [0, 1]);
        }
        let keys: Vec<_> = report.witnesses.iter().map(|w| (w.state, w.positions)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }
}

/// Models satisfying the non-decreasing case of the structural conditions,
/// built from stochastically monotone kernels.
fn structured_model(rng: &mut ChaCha8Rng, k: usize, beta: f64) -> ArmModel {
    let (p0, p1) = if rng.gen_bool(0.5) {
        let p = stochastically_monotone_kernel(rng, k);
        (p.clone(), p)
    } else {
        let row = random_row(rng, k);
        (vec![row; k], stochastically_monotone_kernel(rng, k))
    };
    let mut r0: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut gap: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    r0.sort_by(f64::total_cmp);
    gap.sort_by(f64::total_cmp);
    let r = r0.iter().zip(&gap).map(|(a, g)| [*a, a + g]).collect();
    ArmModel::new(p0, p1, r, beta).unwrap()
}

#[test]
fn structural_conditions_give_threshold_columns_and_indexability() {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for i in 0..60 {
        let k = rng.gen_range(2..=6);
        let beta = rng.gen_range(0.5..0.95);
        let m = structured_model(&mut rng, k, beta);
        assert!(check_structural_conditions(&m).theorem1_nondecreasing_case, "model {i}");
        let grid = SubsidyGrid::default_for(&m);
        let analysis = analyze(&m, &grid, &cfg, false).unwrap();
        assert!(analysis.report.indexable, "model {i}");
        for j in 0..grid.len() {
            let col = analysis.policy.column(j);
            assert!(col.windows(2).all(|w| w[0] <= w[1]), "model {i}, column {j}: {col:?}");
        }
    }
}

fn midpoint_refinement(grid: &SubsidyGrid) -> SubsidyGrid {
    let p = grid.points();
    let mut out = Vec::with_capacity(2 * p.len() - 1);
    for w in p.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.push(*p.last().unwrap());
    SubsidyGrid::new(out).unwrap()
}

#[test]
fn doubling_grid_density_keeps_indexable_verdicts() {
    let cfg = SolverConfig::default();
    let mut checked = 0;
    for i in 0..80 {
        let mut rng = ChaCha8Rng::seed_from_u64(3000 + i);
        let k = rng.gen_range(2..=4);
        let m = random_model(&mut rng, k, 0.9);
        let grid = SubsidyGrid::linspace(-2.0, 2.0, 21).unwrap();
        let coarse = compute_policy_matrix(&m, &grid, &cfg).unwrap();
        let clear = coarse.q_gap().iter().flatten().all(|g| g.abs() > 10.0 * cfg.action_tolerance);
        if !clear || !verify_indexability(&coarse).indexable {
            continue;
        }
        let fine = compute_policy_matrix(&m, &midpoint_refinement(&grid), &cfg).unwrap();
        assert!(verify_indexability(&fine).indexable, "model {i}");
        checked += 1;
    }
    assert!(checked > 40, "only {checked} models checked");
}

#[test]
fn refined_index_matches_fine_scan() {
    let cfg = SolverConfig::default();
    let mut checked = 0;
    for i in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(4000 + i);
        let m = random_model(&mut rng, 2, 0.8);
        let grid = SubsidyGrid::default_for(&m);
        let report = compute_whittle_indices(&m, &grid, &cfg, true).unwrap();
        if !report.indexable {
            continue;
        }
        let lo = grid.points()[0];
        let hi = *grid.points().last().unwrap();
        let steps = ((hi - lo) / 1e-4).ceil() as usize;
        for (s, idx) in report.whittle_index.iter().enumerate() {
            if idx.flag != IndexFlag::Interior {
                continue;
            }
            let scan = (0..=steps)
                .map(|n| lo + n as f64 * 1e-4)
                .find(|&l| {
                    solve_value_function(&m, l, &cfg).action(s, cfg.action_tolerance)
                        == Action::Passive
                })
                .expect("passive somewhere in range");
            assert!((idx.value - scan).abs() <= 2e-4, "model {i}, state {}", s + 1);
            checked += 1;
        }
    }
    assert!(checked >= 10, "only {checked} states checked");
}

#[test]
fn small_gaps_resolve_to_passive() {
    let cfg = SolverConfig::default();
    // identical kernels: Q₁ − Q₀ = 0.3 − λ exactly, so λ = 0.3 is a tie
    let m = ArmModel::new(vec![vec![1.0]], vec![vec![1.0]], vec![[0.0, 0.3]], 0.9).unwrap();
    let grid = SubsidyGrid::new(vec![0.3 - 2e-6, 0.3 - 5e-7, 0.3, 0.3 + 5e-7]).unwrap();
    let phi = compute_policy_matrix(&m, &grid, &cfg).unwrap();
    assert_eq!(phi.actions()[0], vec![1, 0, 0, 0]);
    for (g, a) in phi.q_gap()[0].iter().zip(&phi.actions()[0]) {
        if g.abs() < cfg.action_tolerance {
            assert_eq!(*a, 0);
        }
    }
}

/// Direct double loop over every inequality, with no tail-sum helper.
fn brute_force_structure(m: &ArmModel) -> [bool; 8] {
    let k = m.num_states();
    let tail = |a: Action, s: usize, kk: usize| (kk..k).map(|j| m.transition(a, s, j)).sum::<f64>();
    let pairs = || (0..k).flat_map(move |s| (s + 1..k).map(move |t| (s, t)));
    let eps = 1e-12;
    let mut out = [true; 8];
    for (s, t) in pairs() {
        for (i, a) in Action::BOTH.into_iter().enumerate() {
            if m.reward(t, a) < m.reward(s, a) - eps {
                out[i] = false;
            }
            for kk in 0..k {
                if tail(a, t, kk) < tail(a, s, kk) - eps {
                    out[2 + i] = false;
                }
            }
        }
        let gs = m.reward(s, Action::Active) - m.reward(s, Action::Passive);
        let gt = m.reward(t, Action::Active) - m.reward(t, Action::Passive);
        if gt < gs - eps {
            out[4] = false;
        }
        if gt > gs + eps {
            out[5] = false;
        }
        for kk in 0..k {
            let ds = tail(Action::Active, s, kk) - tail(Action::Passive, s, kk);
            let dt = tail(Action::Active, t, kk) - tail(Action::Passive, t, kk);
            if dt < ds - eps {
                out[6] = false;
            }
            if dt > ds + eps {
                out[7] = false;
            }
        }
    }
    out
}

#[test]
fn structural_report_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for i in 0..200 {
        let m = if i % 2 == 0 {
            random_model(&mut rng, 4, 0.9)
        } else {
            structured_model(&mut rng, 4, 0.9)
        };
        let r = check_structural_conditions(&m);
        let got = [
            r.reward_monotone_nondecreasing[0],
            r.reward_monotone_nondecreasing[1],
            r.tail_monotone[0],
            r.tail_monotone[1],
            r.reward_superadditive,
            r.reward_subadditive,
            r.tail_superadditive,
            r.tail_subadditive,
        ];
        assert_eq!(got, brute_force_structure(&m), "model {i}");
    }
}
