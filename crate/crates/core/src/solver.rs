//! Value iteration for the subsidy-parameterised single-arm problem.
//!
//! For a subsidy `λ` paid whenever the arm rests:
//!
//! ```text
//! Q(s,0,λ) = r(s,0) + λ + β Σ p⁰(s,s') V(s',λ)
//! Q(s,1,λ) = r(s,1)     + β Σ p¹(s,s') V(s',λ)
//! V(s,λ)   = max(Q(s,0,λ), Q(s,1,λ))
//! ```
//!
//! Iteration starts from `V ≡ 0` and stops once the sup-norm step falls below
//! `value_tolerance` or after `max_iterations` backups.

use crate::model::{Action, ArmModel, ModelError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop when `‖V_{t+1} − V_t‖_∞` drops below this.
    pub value_tolerance: f64,
    /// Q-gaps smaller than this are treated as ties and resolved to passive.
    pub action_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100_000,
            value_tolerance: 1e-9,
            action_tolerance: 1e-6,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations == 0 {
            return Err("max_iterations must be at least 1".into());
        }
        if self.value_tolerance.is_nan() || self.value_tolerance <= 0.0 {
            return Err(format!("value tolerance {} must be positive", self.value_tolerance));
        }
        if self.action_tolerance.is_nan() || self.action_tolerance <= 0.0 {
            return Err(format!("action tolerance {} must be positive", self.action_tolerance));
        }
        Ok(())
    }
}

/// Result of one Bellman backup.
#[derive(Debug, Clone, PartialEq)]
pub struct Backup {
    pub q_passive: Vec<f64>,
    pub q_active: Vec<f64>,
    pub values: Vec<f64>,
}

/// Converged (or abandoned) value function at one subsidy.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub subsidy: f64,
    pub q_passive: Vec<f64>,
    pub q_active: Vec<f64>,
    pub values: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Sup-norm step `‖V_{t+1} − V_t‖_∞` after each backup.
    pub residuals: Vec<f64>,
}

impl ValueTable {
    /// `Q(s,1,λ) − Q(s,0,λ)` per state.
    pub fn q_gap(&self) -> Vec<f64> {
        self.q_active
            .iter()
            .zip(&self.q_passive)
            .map(|(a, p)| a - p)
            .collect()
    }

    /// Greedy action with ties (|gap| < `tolerance`) going to passive.
    pub fn action(&self, s: usize, tolerance: f64) -> Action {
        if self.q_active[s] - self.q_passive[s] >= tolerance {
            Action::Active
        } else {
            Action::Passive
        }
    }
}

fn expectation(row: &[f64], values: &[f64]) -> f64 {
    row.iter().zip(values).map(|(p, v)| p * v).sum()
}

/// One synchronous Bellman backup at subsidy `subsidy`.
pub fn bellman_backup(
    model: &ArmModel,
    subsidy: f64,
    values_in: &[f64],
) -> Result<Backup, ModelError> {
    let k = model.num_states();
    if values_in.len() != k {
        return Err(ModelError::DimensionMismatch {
            what: "value vector",
            expected: k,
            found: values_in.len(),
        });
    }
    let mut out = Backup {
        q_passive: Vec::with_capacity(k),
        q_active: Vec::with_capacity(k),
        values: Vec::with_capacity(k),
    };
    backup_into(model, subsidy, values_in, &mut out);
    Ok(out)
}

fn backup_into(model: &ArmModel, subsidy: f64, values_in: &[f64], out: &mut Backup) {
    let beta = model.discount();
    out.q_passive.clear();
    out.q_active.clear();
    out.values.clear();
    for s in 0..model.num_states() {
        let q0 = model.reward(s, Action::Passive)
            + subsidy
            + beta * expectation(model.row(Action::Passive, s), values_in);
        let q1 = model.reward(s, Action::Active)
            + beta * expectation(model.row(Action::Active, s), values_in);
        out.q_passive.push(q0);
        out.q_active.push(q1);
        out.values.push(q0.max(q1));
    }
}

/// Runs value iteration from the zero vector.
///
/// Non-convergence is reported through `converged == false`, not an error.
pub fn solve_value_function(model: &ArmModel, subsidy: f64, config: &SolverConfig) -> ValueTable {
    let k = model.num_states();
    let mut current = vec![0.0; k];
    let mut next = Backup {
        q_passive: Vec::with_capacity(k),
        q_active: Vec::with_capacity(k),
        values: Vec::with_capacity(k),
    };
    let mut residuals = Vec::new();
    let mut converged = false;
    for _ in 0..config.max_iterations.max(1) {
        backup_into(model, subsidy, &current, &mut next);
        let step = next
            .values
            .iter()
            .zip(&current)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        residuals.push(step);
        std::mem::swap(&mut current, &mut next.values);
        if step < config.value_tolerance {
            converged = true;
            break;
        }
    }
    ValueTable {
        subsidy,
        q_passive: next.q_passive,
        q_active: next.q_active,
        values: current,
        iterations_used: residuals.len(),
        converged,
        residuals,
    }
}
