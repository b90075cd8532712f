//! Single restless arm: two transition kernels, a reward table and a discount.
//!
//! States are stored 0-based. Everything that faces a user (CSV, CLI, model
//! files, witnesses) is 1-based.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Row-sum slack accepted by [`ArmModel::new`].
pub const STOCHASTIC_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("an arm needs at least one state")]
    NoStates,

    #[error("{what}: expected {expected} entries, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{action} transition row {row}: entry {col} = {value} is outside [0, 1]")]
    ProbabilityOutOfRange {
        action: Action,
        row: usize,
        col: usize,
        value: f64,
    },

    #[error("{action} transition row {row} sums to {sum}, not 1")]
    RowNotStochastic { action: Action, row: usize, sum: f64 },

    #[error("reward for state {state}, action {action} is not finite")]
    NonFiniteReward { state: usize, action: Action },

    #[error("discount {0} is outside (0, 1)")]
    InvalidDiscount(f64),
}

/// Binary action of a restless arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    Passive = 0,
    Active = 1,
}

impl Action {
    pub const BOTH: [Action; 2] = [Action::Passive, Action::Active];

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Action::Passive => write!(f, "passive"),
            Action::Active => write!(f, "active"),
        }
    }
}

/// One restless arm `(S, {0,1}, P⁰, P¹, R, β)`.
///
/// Transition matrices are stored row-major, `K*K` entries each.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmModel {
    num_states: usize,
    passive: Vec<f64>,
    active: Vec<f64>,
    rewards: Vec<[f64; 2]>,
    discount: f64,
}

impl ArmModel {
    /// Builds a model from nested rows, validating every invariant.
    pub fn new(
        passive_transitions: Vec<Vec<f64>>,
        active_transitions: Vec<Vec<f64>>,
        rewards: Vec<[f64; 2]>,
        discount: f64,
    ) -> Result<Self, ModelError> {
        let k = rewards.len();
        if k == 0 {
            return Err(ModelError::NoStates);
        }
        let passive = flatten(Action::Passive, passive_transitions, k)?;
        let active = flatten(Action::Active, active_transitions, k)?;
        let model = ArmModel {
            num_states: k,
            passive,
            active,
            rewards,
            discount,
        };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<(), ModelError> {
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(ModelError::InvalidDiscount(self.discount));
        }
        for action in Action::BOTH {
            for s in 0..self.num_states {
                let row = self.row(action, s);
                for (col, &p) in row.iter().enumerate() {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(ModelError::ProbabilityOutOfRange {
                            action,
                            row: s + 1,
                            col: col + 1,
                            value: p,
                        });
                    }
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOLERANCE {
                    return Err(ModelError::RowNotStochastic {
                        action,
                        row: s + 1,
                        sum,
                    });
                }
            }
        }
        for (s, r) in self.rewards.iter().enumerate() {
            for action in Action::BOTH {
                if !r[action.index()].is_finite() {
                    return Err(ModelError::NonFiniteReward {
                        state: s + 1,
                        action,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Same arm with a different discount factor.
    pub fn with_discount(&self, discount: f64) -> Result<Self, ModelError> {
        let mut m = self.clone();
        m.discount = discount;
        m.validate()?;
        Ok(m)
    }

    /// Transition row `p^a[s][·]`.
    pub fn row(&self, action: Action, s: usize) -> &[f64] {
        let k = self.num_states;
        let m = match action {
            Action::Passive => &self.passive,
            Action::Active => &self.active,
        };
        &m[s * k..(s + 1) * k]
    }

    pub fn transition(&self, action: Action, from: usize, to: usize) -> f64 {
        self.row(action, from)[to]
    }

    pub fn reward(&self, s: usize, action: Action) -> f64 {
        self.rewards[s][action.index()]
    }

    pub fn rewards(&self) -> &[[f64; 2]] {
        &self.rewards
    }

    /// Transition matrix for `action` as nested rows.
    pub fn matrix(&self, action: Action) -> Vec<Vec<f64>> {
        (0..self.num_states)
            .map(|s| self.row(action, s).to_vec())
            .collect()
    }

    /// Smallest and largest reward entry over both actions.
    pub fn reward_range(&self) -> (f64, f64) {
        self.rewards
            .iter()
            .flat_map(|r| r.iter().copied())
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
                (lo.min(r), hi.max(r))
            })
    }

    /// Draws the successor of `s` under `action` from a uniform sample `u ∈ [0,1)`.
    pub fn sample_next(&self, s: usize, action: Action, u: f64) -> usize {
        let row = self.row(action, s);
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack above the cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(self.num_states - 1)
    }
}

fn flatten(action: Action, rows: Vec<Vec<f64>>, k: usize) -> Result<Vec<f64>, ModelError> {
    let what = match action {
        Action::Passive => "passive transition rows",
        Action::Active => "active transition rows",
    };
    if rows.len() != k {
        return Err(ModelError::DimensionMismatch {
            what,
            expected: k,
            found: rows.len(),
        });
    }
    let mut flat = Vec::with_capacity(k * k);
    for row in rows {
        if row.len() != k {
            return Err(ModelError::DimensionMismatch {
                what,
                expected: k,
                found: row.len(),
            });
        }
        flat.extend(row);
    }
    Ok(flat)
}
