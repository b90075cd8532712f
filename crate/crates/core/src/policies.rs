//! Arm-selection rules for an `N`-armed restless bandit playing `M` arms per step.
//!
//! * myopic: the `M` arms with the largest active reward in their current state;
//! * Whittle: the `M` arms with the largest precomputed index in their current state;
//! * rollout: one-step improvement over the myopic rule, scoring each candidate
//!   initial action `ξ` by `r̃(X,ξ) + β·Q̃_{H,L}(X,ξ)` where `Q̃` averages
//!   `L` simulated `H`-step discounted returns that start with `ξ` and follow
//!   the myopic rule afterwards.
//!
//! All ties go to the lowest arm identifiers. Arm identifiers and states are
//! 0-based here.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indexability::{analyze, IndexError, SubsidyGrid};
use crate::model::{Action, ArmModel};
use crate::solver::SolverConfig;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PolicyError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("arm {arm}: state {state} outside 1..={num_states}")]
    StateOutOfRange {
        arm: usize,
        state: usize,
        num_states: usize,
    },

    #[error("joint state has {found} entries for {expected} arms")]
    WrongArity { expected: usize, found: usize },

    #[error("no Whittle index for arm {arm}, state {state}")]
    MissingIndex { arm: usize, state: usize },

    #[error("arm {arm} is not indexable (state {state} switches back to active)")]
    NonIndexable { arm: usize, state: usize },

    #[error("invalid rollout configuration: {0}")]
    InvalidConfig(String),

    #[error("initial action plays {found} arms, instance plays {expected}")]
    WrongPlayCount { expected: usize, found: usize },

    #[error(transparent)]
    Index(#[from] IndexError),
}

/// `N` arms sharing one discount, `M` of which are played each step.
#[derive(Debug, Clone, PartialEq)]
pub struct RmabInstance {
    arms: Vec<ArmModel>,
    plays_per_step: usize,
    discount: f64,
}

impl RmabInstance {
    pub fn new(arms: Vec<ArmModel>, plays_per_step: usize) -> Result<Self, PolicyError> {
        let Some(first) = arms.first() else {
            return Err(PolicyError::InvalidInstance("no arms".into()));
        };
        let discount = first.discount();
        if let Some(n) = arms.iter().position(|a| a.discount() != discount) {
            return Err(PolicyError::InvalidInstance(format!(
                "arm {} has discount {}, arm 1 has {}",
                n + 1,
                arms[n].discount(),
                discount
            )));
        }
        if plays_per_step == 0 || plays_per_step > arms.len() {
            return Err(PolicyError::InvalidInstance(format!(
                "plays per step {} outside 1..={}",
                plays_per_step,
                arms.len()
            )));
        }
        Ok(RmabInstance {
            arms,
            plays_per_step,
            discount,
        })
    }

    pub fn arms(&self) -> &[ArmModel] {
        &self.arms
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn plays_per_step(&self) -> usize {
        self.plays_per_step
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// `Σ_n r^n(X^n, b^n)` with `b^n = 1` for arms in `played`.
    pub fn total_reward(&self, state: &JointState, played: &ArmSet) -> f64 {
        let mut mask = vec![false; self.arms.len()];
        for &n in played.arms() {
            mask[n] = true;
        }
        self.arms
            .iter()
            .zip(state.states())
            .zip(&mask)
            .map(|((arm, &s), &p)| arm.reward(s, if p { Action::Active } else { Action::Passive }))
            .sum()
    }
}

/// Current state of every arm (0-based).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct JointState(Vec<usize>);

impl JointState {
    pub fn new(instance: &RmabInstance, states: Vec<usize>) -> Result<Self, PolicyError> {
        if states.len() != instance.num_arms() {
            return Err(PolicyError::WrongArity {
                expected: instance.num_arms(),
                found: states.len(),
            });
        }
        for (n, (&s, arm)) in states.iter().zip(instance.arms()).enumerate() {
            if s >= arm.num_states() {
                return Err(PolicyError::StateOutOfRange {
                    arm: n + 1,
                    state: s + 1,
                    num_states: arm.num_states(),
                });
            }
        }
        Ok(JointState(states))
    }

    /// From 1-based states, as written in files and on the command line.
    pub fn from_one_based(instance: &RmabInstance, states: &[usize]) -> Result<Self, PolicyError> {
        if let Some(n) = states.iter().position(|&s| s == 0) {
            return Err(PolicyError::StateOutOfRange {
                arm: n + 1,
                state: 0,
                num_states: instance.arms()[n.min(instance.num_arms() - 1)].num_states(),
            });
        }
        Self::new(instance, states.iter().map(|s| s - 1).collect())
    }

    pub fn states(&self) -> &[usize] {
        &self.0
    }

    pub(crate) fn states_mut(&mut self) -> &mut [usize] {
        &mut self.0
    }
}

/// Sorted set of 0-based arm identifiers.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ArmSet(Vec<usize>);

impl ArmSet {
    pub fn new(mut arms: Vec<usize>) -> Self {
        arms.sort_unstable();
        arms.dedup();
        ArmSet(arms)
    }

    pub fn arms(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, arm: usize) -> bool {
        self.0.binary_search(&arm).is_ok()
    }

    /// 1-based identifiers.
    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|a| a + 1).collect()
    }
}

/// Indices of the `m` largest scores, ties to the lower identifier.
fn top_m(scores: &[f64], m: usize) -> ArmSet {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(m);
    ArmSet::new(order)
}

fn myopic_on(instance: &RmabInstance, states: &[usize]) -> ArmSet {
    let scores: Vec<f64> = instance
        .arms()
        .iter()
        .zip(states)
        .map(|(arm, &s)| arm.reward(s, Action::Active))
        .collect();
    top_m(&scores, instance.plays_per_step())
}

/// Plays the `M` arms with the highest immediate active reward.
pub fn myopic_action(instance: &RmabInstance, state: &JointState) -> ArmSet {
    myopic_on(instance, state.states())
}

/// Whittle indices for every arm and state, computed offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    per_arm: Vec<Vec<f64>>,
}

impl IndexTable {
    pub fn new(per_arm: Vec<Vec<f64>>) -> Self {
        IndexTable { per_arm }
    }

    pub fn per_arm(&self) -> &[Vec<f64>] {
        &self.per_arm
    }

    /// Computes refined indices for every arm on its default grid.
    pub fn compute(instance: &RmabInstance, config: &SolverConfig) -> Result<Self, PolicyError> {
        let per_arm = instance
            .arms()
            .iter()
            .enumerate()
            .map(|(n, arm)| {
                let grid = SubsidyGrid::default_for(arm);
                let analysis = analyze(arm, &grid, config, true)?;
                if !analysis.report.indexable {
                    let state = analysis.report.witnesses.first().map_or(0, |w| w.state);
                    return Err(PolicyError::NonIndexable { arm: n + 1, state });
                }
                Ok(analysis.report.index_values())
            })
            .collect::<Result<_, _>>()?;
        Ok(IndexTable { per_arm })
    }

    /// Checks that the table covers every arm and state of `instance`.
    pub fn check_covers(&self, instance: &RmabInstance) -> Result<(), PolicyError> {
        for (n, arm) in instance.arms().iter().enumerate() {
            let have = self.per_arm.get(n).map_or(0, Vec::len);
            if have < arm.num_states() {
                return Err(PolicyError::MissingIndex {
                    arm: n + 1,
                    state: have + 1,
                });
            }
        }
        Ok(())
    }
}

/// Plays the `M` arms with the highest Whittle index in their current state.
pub fn whittle_action(
    instance: &RmabInstance,
    state: &JointState,
    indices: &IndexTable,
) -> Result<ArmSet, PolicyError> {
    let scores = state
        .states()
        .iter()
        .enumerate()
        .map(|(n, &s)| {
            indices
                .per_arm
                .get(n)
                .and_then(|row| row.get(s))
                .copied()
                .ok_or(PolicyError::MissingIndex {
                    arm: n + 1,
                    state: s + 1,
                })
        })
        .collect::<Result<Vec<f64>, _>>()?;
    Ok(top_m(&scores, instance.plays_per_step()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RolloutConfig {
    /// Look-ahead length `H`.
    pub horizon: usize,
    /// Trajectories `L` per candidate.
    pub trajectories: usize,
    /// Candidate subsets `|A|` evaluated when `M > 1`; defaults to `N`.
    pub candidate_limit: Option<usize>,
    pub seed: u64,
}

impl Default for RolloutConfig {
    fn default() -> Self {
        RolloutConfig {
            horizon: 4,
            trajectories: 30,
            candidate_limit: None,
            seed: 0,
        }
    }
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.horizon == 0 {
            return Err(PolicyError::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.trajectories == 0 {
            return Err(PolicyError::InvalidConfig("trajectories must be at least 1".into()));
        }
        if self.candidate_limit == Some(0) {
            return Err(PolicyError::InvalidConfig("candidate limit must be at least 1".into()));
        }
        Ok(())
    }

    /// Pseudo-random source seeded from `seed`.
    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RolloutEstimate {
    /// `Q̃_{H,L}`.
    pub mean: f64,
    /// Sample standard deviation over trajectories divided by `√L`.
    pub std_error: f64,
    /// Trajectory steps simulated (`L·H`).
    pub trajectory_steps: u64,
}

/// Averages `L` discounted `H`-step returns starting with `initial`.
///
/// Trajectory `l` draws from stream `l` of a generator seeded with
/// `base_seed`, so every candidate sees the same random numbers.
fn estimate_with_seed(
    instance: &RmabInstance,
    state: &JointState,
    initial: &ArmSet,
    config: &RolloutConfig,
    base_seed: u64,
) -> RolloutEstimate {
    let beta = instance.discount();
    let mut returns = Vec::with_capacity(config.trajectories);
    let mut scratch = state.clone();
    for l in 0..config.trajectories {
        let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
        rng.set_stream(l as u64);
        scratch.0.copy_from_slice(state.states());
        let mut weight = 1.0;
        let mut total = 0.0;
        for h in 0..config.horizon {
            let played = if h == 0 { initial.clone() } else { myopic_on(instance, scratch.states()) };
            total += weight * instance.total_reward(&scratch, &played);
            weight *= beta;
            if h + 1 < config.horizon {
                step_arms(instance, scratch.states_mut(), &played, &mut rng);
            }
        }
        returns.push(total);
    }
    let (mean, std_error) = mean_and_std_error(&returns);
    RolloutEstimate {
        mean,
        std_error,
        trajectory_steps: (config.trajectories * config.horizon) as u64,
    }
}

/// Advances every arm one step: played arms under `P¹`, the rest under `P⁰`.
/// One uniform draw per arm, in arm order.
pub(crate) fn step_arms<R: Rng + ?Sized>(
    instance: &RmabInstance,
    states: &mut [usize],
    played: &ArmSet,
    rng: &mut R,
) {
    for (n, (arm, s)) in instance.arms().iter().zip(states.iter_mut()).enumerate() {
        let action = if played.contains(n) { Action::Active } else { Action::Passive };
        let u: f64 = rng.gen();
        *s = arm.sample_next(*s, action, u);
    }
}

pub(crate) fn mean_and_std_error(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte Carlo estimate `Q̃_{H,L}(X, ξ)` of the `H`-step return that starts
/// with `initial_action` and follows the myopic rule.
pub fn rollout_value_estimate<R: RngCore + ?Sized>(
    instance: &RmabInstance,
    state: &JointState,
    initial_action: &ArmSet,
    config: &RolloutConfig,
    rng: &mut R,
) -> Result<RolloutEstimate, PolicyError> {
    config.validate()?;
    if initial_action.len() != instance.plays_per_step() {
        return Err(PolicyError::WrongPlayCount {
            expected: instance.plays_per_step(),
            found: initial_action.len(),
        });
    }
    if let Some(&bad) = initial_action.arms().iter().find(|&&n| n >= instance.num_arms()) {
        return Err(PolicyError::InvalidInstance(format!("arm {} does not exist", bad + 1)));
    }
    let base_seed = rng.next_u64();
    Ok(estimate_with_seed(instance, state, initial_action, config, base_seed))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateScore {
    pub arms: ArmSet,
    /// `r̃(X, ξ)`.
    pub immediate: f64,
    pub estimate: RolloutEstimate,
    /// `r̃ + β·Q̃`, the quantity maximised.
    pub score: f64,
}

impl CandidateScore {
    /// Plain `H`-step look-ahead value `Q̃`, which already contains the
    /// first-step reward at weight 1.
    pub fn lookahead_only(&self) -> f64 {
        self.estimate.mean
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutDecision {
    pub arms: ArmSet,
    /// Candidates in lexicographic order.
    pub candidates: Vec<CandidateScore>,
    /// Total trajectory steps simulated for this decision.
    pub trajectory_steps: u64,
}

fn binomial(n: usize, k: usize) -> usize {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return usize::MAX;
        }
    }
    acc as usize
}

#[derive(PartialEq)]
struct HeapEntry {
    score: f64,
    arms: Vec<usize>,
    positions: Vec<usize>,
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.score
            .total_cmp(&other.score)
            .then_with(|| other.arms.cmp(&self.arms))
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// The `limit` size-`m` subsets with the largest `Σ gains`, by best-first search.
pub fn best_subsets(gains: &[f64], m: usize, limit: usize) -> Vec<ArmSet> {
    let n = gains.len();
    if m == 0 || m > n || limit == 0 {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]).then(a.cmp(&b)));
    let entry = |positions: Vec<usize>| {
        let mut arms: Vec<usize> = positions.iter().map(|&p| order[p]).collect();
        arms.sort_unstable();
        let score = arms.iter().map(|&a| gains[a]).sum();
        HeapEntry {
            score,
            arms,
            positions,
        }
    };
    let mut heap = BinaryHeap::new();
    let mut seen = HashSet::new();
    let start: Vec<usize> = (0..m).collect();
    seen.insert(start.clone());
    heap.push(entry(start));
    let mut out = Vec::with_capacity(limit);
    while let Some(top) = heap.pop() {
        for i in 0..m {
            let next = top.positions[i] + 1;
            let free = if i + 1 < m { next < top.positions[i + 1] } else { next < n };
            if free {
                let mut p = top.positions.clone();
                p[i] = next;
                if seen.insert(p.clone()) {
                    heap.push(entry(p));
                }
            }
        }
        out.push(ArmSet(top.arms));
        if out.len() == limit {
            break;
        }
    }
    out
}

/// Candidate initial actions: every single arm when `M = 1`, otherwise the
/// `|A|` subsets with the largest immediate reward.
pub fn rollout_candidates(
    instance: &RmabInstance,
    state: &JointState,
    config: &RolloutConfig,
) -> Vec<ArmSet> {
    let n = instance.num_arms();
    let m = instance.plays_per_step();
    if m == 1 {
        return (0..n).map(|a| ArmSet(vec![a])).collect();
    }
    let gains: Vec<f64> = instance
        .arms()
        .iter()
        .zip(state.states())
        .map(|(arm, &s)| arm.reward(s, Action::Active) - arm.reward(s, Action::Passive))
        .collect();
    let limit = config.candidate_limit.unwrap_or(n).min(binomial(n, m));
    let mut subsets = best_subsets(&gains, m, limit);
    subsets.sort();
    subsets
}

/// One-step improvement of the myopic rule.
pub fn rollout_action<R: RngCore + ?Sized>(
    instance: &RmabInstance,
    state: &JointState,
    config: &RolloutConfig,
    rng: &mut R,
) -> Result<RolloutDecision, PolicyError> {
    config.validate()?;
    let base_seed = rng.next_u64();
    let beta = instance.discount();
    let candidates: Vec<CandidateScore> = rollout_candidates(instance, state, config)
        .into_iter()
        .map(|arms| {
            let immediate = instance.total_reward(state, &arms);
            let estimate = estimate_with_seed(instance, state, &arms, config, base_seed);
            CandidateScore {
                score: immediate + beta * estimate.mean,
                arms,
                immediate,
                estimate,
            }
        })
        .collect();
    let mut best = 0;
    for (i, c) in candidates.iter().enumerate().skip(1) {
        if c.score > candidates[best].score {
            best = i;
        }
    }
    let trajectory_steps = candidates.iter().map(|c| c.estimate.trajectory_steps).sum();
    Ok(RolloutDecision {
        arms: candidates[best].arms.clone(),
        candidates,
        trajectory_steps,
    })
}
