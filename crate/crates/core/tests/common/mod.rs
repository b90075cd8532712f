#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rmab_core::model::{Action, ArmModel};

pub fn random_row(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() + 1e-3).collect();
    let sum: f64 = w.iter().sum();
    w.iter().map(|x| x / sum).collect()
}

pub fn random_kernel(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| random_row(rng, k)).collect()
}

/// Unstructured model with rewards in [-1, 1].
pub fn random_model(rng: &mut ChaCha8Rng, k: usize, beta: f64) -> ArmModel {
    let p0 = random_kernel(rng, k);
    let p1 = random_kernel(rng, k);
    let r = (0..k)
        .map(|_| [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    ArmModel::new(p0, p1, r, beta).unwrap()
}

/// Kernel whose tail sums `Σ_{j≥k} p(s,j)` are non-decreasing in `s`.
///
/// Random tails are sorted along `k` (descending) and then along `s`
/// (ascending); the second sort keeps the first order intact.
pub fn stochastically_monotone_kernel(rng: &mut ChaCha8Rng, k: usize) -> Vec<Vec<f64>> {
    let mut tails: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let mut t: Vec<f64> = (1..k).map(|_| rng.gen::<f64>()).collect();
            t.sort_by(|a, b| b.total_cmp(a));
            t
        })
        .collect();
    for col in 0..k.saturating_sub(1) {
        let mut c: Vec<f64> = tails.iter().map(|t| t[col]).collect();
        c.sort_by(f64::total_cmp);
        for (t, v) in tails.iter_mut().zip(c) {
            t[col] = v;
        }
    }
    tails
        .into_iter()
        .map(|t| {
            let mut q = vec![1.0];
            q.extend(t);
            q.push(0.0);
            (0..k).map(|j| q[j] - q[j + 1]).collect()
        })
        .collect()
}

pub fn policy_value(model: &ArmModel, subsidy: f64, policy: &[Action]) -> DVector<f64> {
    let k = model.num_states();
    let beta = model.discount();
    let mut a = DMatrix::<f64>::identity(k, k);
    let mut b = DVector::<f64>::zeros(k);
    for s in 0..k {
        let act = policy[s];
        for j in 0..k {
            a[(s, j)] -= beta * model.transition(act, s, j);
        }
        b[s] = model.reward(s, act) + if act == Action::Passive { subsidy } else { 0.0 };
    }
    a.lu().solve(&b).expect("I - βP is invertible")
}

pub struct Enumeration {
    /// Pointwise maximum over all stationary deterministic policies.
    pub values: Vec<f64>,
    /// A policy attaining it (largest value sum).
    pub best: Vec<Action>,
}

pub fn enumerate_policies(model: &ArmModel, subsidy: f64) -> Enumeration {
    let k = model.num_states();
    let mut values = vec![f64::NEG_INFINITY; k];
    let mut best = Vec::new();
    let mut best_sum = f64::NEG_INFINITY;
    for mask in 0u32..(1 << k) {
        let policy: Vec<Action> = (0..k)
            .map(|s| if mask >> s & 1 == 1 { Action::Active } else { Action::Passive })
            .collect();
        let v = policy_value(model, subsidy, &policy);
        for s in 0..k {
            values[s] = values[s].max(v[s]);
        }
        if v.sum() > best_sum {
            best_sum = v.sum();
            best = policy;
        }
    }
    Enumeration { values, best }
}
