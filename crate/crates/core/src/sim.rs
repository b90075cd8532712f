//! Monte Carlo evaluation of a policy on an RMAB instance.
//!
//! Each replication owns two ChaCha streams derived from `(seed, replication)`:
//! one drives the environment (initial state and transitions), the other feeds
//! the policy's own randomness. Swapping the policy therefore leaves the
//! environment draws untouched until the trajectories diverge, and results do
//! not depend on how replications are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::policies::{
    mean_and_std_error, myopic_action, rollout_action, step_arms, whittle_action, ArmSet,
    IndexTable, JointState, PolicyError, RmabInstance, RolloutConfig,
};

const POLICY_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialState {
    Fixed(JointState),
    /// Each arm starts in a uniformly drawn state, independently per replication.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimPolicy {
    Myopic,
    Whittle(IndexTable),
    Rollout(RolloutConfig),
}

impl SimPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SimPolicy::Myopic => "myopic",
            SimPolicy::Whittle(_) => "whittle",
            SimPolicy::Rollout(_) => "rollout",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon_steps: usize,
    pub replications: usize,
    pub seed: u64,
    pub initial_state: InitialState,
    pub policy: SimPolicy,
    /// Index of the first replication; replication `i` always uses the same
    /// streams whatever batch it runs in.
    pub first_replication: u64,
}

impl SimulationConfig {
    pub fn new(policy: SimPolicy, horizon_steps: usize, replications: usize, seed: u64) -> Self {
        SimulationConfig {
            horizon_steps,
            replications,
            seed,
            initial_state: InitialState::UniformRandom,
            policy,
            first_replication: 0,
        }
    }
}

/// `⌈1/(1−β)⌉·5` steps.
pub fn default_horizon(discount: f64) -> usize {
    // the epsilon keeps 1/(1-0.9) = 10.000000000000002 from rounding up
    5 * (1.0 / (1.0 - discount) - 1e-9).ceil() as usize
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    /// Mean over replications of `Σ_{t'≤t} β^{t'} Σ_n r^n(X_{t'}^n, A_{t'}^n)`.
    pub per_step_mean_discounted_cumulative: Vec<f64>,
    pub per_step_std_error: Vec<f64>,
    pub final_value_per_replication: Vec<f64>,
}

impl SimulationTrace {
    pub fn final_mean(&self) -> f64 {
        *self.per_step_mean_discounted_cumulative.last().expect("T ≥ 1")
    }

    pub fn final_std_error(&self) -> f64 {
        *self.per_step_std_error.last().expect("T ≥ 1")
    }
}

fn streams(seed: u64, replication: u64) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(replication);
    let mut policy = ChaCha8Rng::seed_from_u64(seed ^ POLICY_STREAM_SALT);
    policy.set_stream(replication);
    (env, policy)
}

/// Discounted cumulative reward after each step of one replication.
fn run_replication(
    instance: &RmabInstance,
    config: &SimulationConfig,
    replication: u64,
) -> Result<Vec<f64>, SimError> {
    let (mut env, mut policy_rng) = streams(config.seed, replication);
    let mut state = match &config.initial_state {
        InitialState::Fixed(s) => s.clone(),
        InitialState::UniformRandom => {
            let states = instance
                .arms()
                .iter()
                .map(|arm| env.gen_range(0..arm.num_states()))
                .collect();
            JointState::new(instance, states)?
        }
    };
    let beta = instance.discount();
    let mut weight = 1.0;
    let mut cumulative = 0.0;
    let mut path = Vec::with_capacity(config.horizon_steps);
    for _ in 0..config.horizon_steps {
        let played: ArmSet = match &config.policy {
            SimPolicy::Myopic => myopic_action(instance, &state),
            SimPolicy::Whittle(table) => whittle_action(instance, &state, table)?,
            SimPolicy::Rollout(rc) => rollout_action(instance, &state, rc, &mut policy_rng)?.arms,
        };
        cumulative += weight * instance.total_reward(&state, &played);
        path.push(cumulative);
        weight *= beta;
        step_arms(instance, state.states_mut(), &played, &mut env);
    }
    Ok(path)
}

/// Runs `R` independent replications of `T` steps and aggregates them.
pub fn simulate(
    instance: &RmabInstance,
    config: &SimulationConfig,
) -> Result<SimulationTrace, SimError> {
    if config.horizon_steps == 0 {
        return Err(SimError::Config("horizon must be at least 1 step".into()));
    }
    if config.replications == 0 {
        return Err(SimError::Config("need at least one replication".into()));
    }
    match &config.policy {
        SimPolicy::Whittle(table) => table.check_covers(instance)?,
        SimPolicy::Rollout(rc) => rc.validate()?,
        SimPolicy::Myopic => {}
    }
    if let InitialState::Fixed(s) = &config.initial_state {
        JointState::new(instance, s.states().to_vec())?;
    }

    let paths: Vec<Vec<f64>> = (0..config.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(instance, config, config.first_replication + r))
        .collect::<Result<_, _>>()?;

    let t_len = config.horizon_steps;
    let mut means = Vec::with_capacity(t_len);
    let mut errors = Vec::with_capacity(t_len);
    let mut column = vec![0.0; paths.len()];
    for t in 0..t_len {
        for (c, p) in column.iter_mut().zip(&paths) {
            *c = p[t];
        }
        let (m, se) = mean_and_std_error(&column);
        means.push(m);
        errors.push(se);
    }
    Ok(SimulationTrace {
        per_step_mean_discounted_cumulative: means,
        per_step_std_error: errors,
        final_value_per_replication: paths.iter().map(|p| p[t_len - 1]).collect(),
    })
}
