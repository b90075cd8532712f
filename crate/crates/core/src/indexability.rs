//! Policy matrix over a subsidy grid, passive sets, indexability verdicts and
//! Whittle indices.
//!
//! For every grid point `λⱼ` the single-arm problem is solved independently
//! and the greedy action recorded in `Φ(s, j)`; gaps below the action
//! tolerance resolve to passive. The arm is indexable on the grid when every
//! row of `Φ` is non-increasing, equivalently when the passive sets
//! `B(λ₁) ⊆ B(λ₂) ⊆ …` are nested. The index of a state is the first grid
//! subsidy at which it becomes passive, optionally sharpened by bisection.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, ArmModel};
use crate::solver::{solve_value_function, SolverConfig, ValueTable};

/// Points per default grid.
pub const DEFAULT_GRID_POINTS: usize = 201;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("subsidy grid needs at least two points, got {0}")]
    GridTooSmall(usize),

    #[error("subsidy grid is not strictly increasing at position {position}")]
    GridNotIncreasing { position: usize },

    #[error("subsidy grid contains a non-finite value")]
    GridNotFinite,

    #[error("invalid solver configuration: {0}")]
    Config(String),

    #[error("value iteration did not converge at λ = {subsidy} within {iterations} iterations")]
    NotConverged { subsidy: f64, iterations: usize },

    #[error("grid position {position} out of range 1..={len}")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("policy matrix is malformed: {0}")]
    Malformed(String),
}

/// Strictly increasing finite set of subsidies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsidyGrid {
    points: Vec<f64>,
}

impl SubsidyGrid {
    pub fn new(points: Vec<f64>) -> Result<Self, IndexError> {
        if points.len() < 2 {
            return Err(IndexError::GridTooSmall(points.len()));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(IndexError::GridNotFinite);
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(IndexError::GridNotIncreasing { position: i + 2 });
        }
        Ok(SubsidyGrid { points })
    }

    /// `n` evenly spaced points from `lo` to `hi` inclusive.
    pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Self, IndexError> {
        if n < 2 {
            return Err(IndexError::GridTooSmall(n));
        }
        let span = hi - lo;
        let last = (n - 1) as f64;
        let points = (0..n)
            .map(|j| if j == n - 1 { hi } else { lo + span * (j as f64) / last })
            .collect();
        SubsidyGrid::new(points)
    }

    /// Grid covering the reward span of `model`, widened to contain `[-1, 1]`.
    pub fn default_for(model: &ArmModel) -> Self {
        Self::default_for_points(model, DEFAULT_GRID_POINTS)
    }

    pub fn default_for_points(model: &ArmModel, n: usize) -> Self {
        let (lo_r, hi_r) = model.reward_range();
        let lo = (lo_r - (hi_r - lo_r) - 0.1).min(-1.0);
        let hi = (hi_r + 0.1).max(1.0);
        SubsidyGrid::linspace(lo, hi, n.max(2)).expect("finite, increasing bounds")
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// 0-based position of the grid point closest to `lambda`.
    pub fn nearest(&self, lambda: f64) -> usize {
        let mut best = 0;
        for (j, p) in self.points.iter().enumerate() {
            if (p - lambda).abs() < (self.points[best] - lambda).abs() {
                best = j;
            }
        }
        best
    }
}

/// `Φ = [[π_λⱼ(s)]]`, `K × J`, with the Q-gaps it was derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyMatrix {
    grid: SubsidyGrid,
    /// `actions[s][j]`, 1 = active.
    actions: Vec<Vec<u8>>,
    q_gap: Vec<Vec<f64>>,
    /// Converged `V(s, λⱼ)`, `values[s][j]`.
    values: Vec<Vec<f64>>,
}

impl PolicyMatrix {
    /// Wraps a hand-written action matrix. Q-gaps and values are left empty.
    pub fn from_actions(grid: SubsidyGrid, actions: Vec<Vec<u8>>) -> Result<Self, IndexError> {
        for (s, row) in actions.iter().enumerate() {
            if row.len() != grid.len() {
                return Err(IndexError::Malformed(format!(
                    "row {} has {} entries for a grid of {}",
                    s + 1,
                    row.len(),
                    grid.len()
                )));
            }
            if row.iter().any(|&a| a > 1) {
                return Err(IndexError::Malformed(format!("row {} has a non-binary entry", s + 1)));
            }
        }
        Ok(PolicyMatrix {
            grid,
            actions,
            q_gap: Vec::new(),
            values: Vec::new(),
        })
    }

    pub fn grid(&self) -> &SubsidyGrid {
        &self.grid
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    pub fn actions(&self) -> &[Vec<u8>] {
        &self.actions
    }

    /// Empty when built from a hand-written matrix.
    pub fn q_gap(&self) -> &[Vec<f64>] {
        &self.q_gap
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn action(&self, s: usize, j: usize) -> u8 {
        self.actions[s][j]
    }

    /// Column `j` (0-based) as a policy vector.
    pub fn column(&self, j: usize) -> Vec<u8> {
        self.actions.iter().map(|row| row[j]).collect()
    }

    fn passive_set_at(&self, j: usize) -> BTreeSet<usize> {
        (0..self.num_states())
            .filter(|&s| self.actions[s][j] == 0)
            .map(|s| s + 1)
            .collect()
    }
}

/// Solves the arm at every grid point and assembles `Φ`.
pub fn compute_policy_matrix(
    model: &ArmModel,
    grid: &SubsidyGrid,
    config: &SolverConfig,
) -> Result<PolicyMatrix, IndexError> {
    config.validate().map_err(IndexError::Config)?;
    let tables: Vec<ValueTable> = grid
        .points()
        .par_iter()
        .map(|&lambda| solve_value_function(model, lambda, config))
        .collect();
    if let Some(t) = tables.iter().find(|t| !t.converged) {
        return Err(IndexError::NotConverged {
            subsidy: t.subsidy,
            iterations: t.iterations_used,
        });
    }
    let k = model.num_states();
    let mut actions = vec![Vec::with_capacity(grid.len()); k];
    let mut q_gap = vec![Vec::with_capacity(grid.len()); k];
    let mut values = vec![Vec::with_capacity(grid.len()); k];
    for t in &tables {
        for s in 0..k {
            actions[s].push(t.action(s, config.action_tolerance) as u8);
            q_gap[s].push(t.q_active[s] - t.q_passive[s]);
            values[s].push(t.values[s]);
        }
    }
    Ok(PolicyMatrix {
        grid: grid.clone(),
        actions,
        q_gap,
        values,
    })
}

/// `B(λⱼ)` as 1-based states, for 1-based grid position `j`.
pub fn passive_set(policy: &PolicyMatrix, j: usize) -> Result<BTreeSet<usize>, IndexError> {
    let len = policy.grid.len();
    if j == 0 || j > len {
        return Err(IndexError::PositionOutOfRange { position: j, len });
    }
    Ok(policy.passive_set_at(j - 1))
}

/// All passive sets, left to right.
pub fn passive_sets(policy: &PolicyMatrix) -> Vec<BTreeSet<usize>> {
    (0..policy.grid.len()).map(|j| policy.passive_set_at(j)).collect()
}

/// How a state's index relates to the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexFlag {
    /// Threshold found inside the grid.
    Interior,
    /// Passive already at the first grid point; the index is at most `λ₁`.
    AtOrBelowGrid,
    /// Active at every grid point; no finite index on this grid.
    AboveGrid,
}

impl IndexFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            IndexFlag::Interior => "",
            IndexFlag::AtOrBelowGrid => "at_or_below_grid",
            IndexFlag::AboveGrid => "above_grid",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateIndex {
    /// `+∞` when the flag is [`IndexFlag::AboveGrid`].
    pub value: f64,
    pub flag: IndexFlag,
    /// Width of the final bracket `(lo, value]` containing the threshold.
    /// Zero for flagged states.
    pub bracket_width: f64,
}

/// A `1 → 0 → 1` pattern in one row of `Φ`.
///
/// A row that starts passive and later turns active has no grid point with
/// the first `1`. Active play is strictly optimal once `λ` is low enough,
/// so the first subsidy is then `−∞` and its position `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    /// 1-based state.
    pub state: usize,
    /// Subsidies with actions 1, 0, 1 in that order.
    pub lambdas: [f64; 3],
    /// 0-based grid positions of those subsidies.
    pub positions: [Option<usize>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexReport {
    pub indexable: bool,
    /// One entry per state when indexable, empty otherwise.
    pub whittle_index: Vec<StateIndex>,
    pub witnesses: Vec<Witness>,
    pub passive_sets: Vec<BTreeSet<usize>>,
}

impl IndexReport {
    /// Index values only; `+∞` for states above the grid.
    pub fn index_values(&self) -> Vec<f64> {
        self.whittle_index.iter().map(|i| i.value).collect()
    }
}

fn rows_non_increasing(policy: &PolicyMatrix) -> bool {
    policy
        .actions
        .iter()
        .all(|row| row.windows(2).all(|w| w[1] <= w[0]))
}

fn passive_sets_nested(sets: &[BTreeSet<usize>]) -> bool {
    sets.windows(2).all(|w| w[0].is_subset(&w[1]))
}

fn row_witnesses(state: usize, row: &[u8], grid: &[f64], out: &mut Vec<Witness>) {
    let mut first_active = None;
    let mut zero_run_start = None;
    for (j, &a) in row.iter().enumerate() {
        match (a, zero_run_start) {
            (0, None) => zero_run_start = Some(j),
            (1, Some(z)) => {
                let positions = [first_active, Some(z), Some(j)];
                out.push(Witness {
                    state: state + 1,
                    lambdas: positions.map(|p| p.map_or(f64::NEG_INFINITY, |p| grid[p])),
                    positions,
                });
                zero_run_start = None;
            }
            _ => {}
        }
        if a == 1 && first_active.is_none() {
            first_active = Some(j);
        }
    }
}

/// Checks row monotonicity of `Φ` and extracts grid indices or witnesses.
pub fn verify_indexability(policy: &PolicyMatrix) -> IndexReport {
    let sets = passive_sets(policy);
    let by_rows = rows_non_increasing(policy);
    debug_assert_eq!(by_rows, passive_sets_nested(&sets));
    let grid = policy.grid.points();

    if !by_rows {
        let mut witnesses = Vec::new();
        for (s, row) in policy.actions.iter().enumerate() {
            row_witnesses(s, row, grid, &mut witnesses);
        }
        return IndexReport {
            indexable: false,
            whittle_index: Vec::new(),
            witnesses,
            passive_sets: sets,
        };
    }

    let whittle_index = policy
        .actions
        .iter()
        .map(|row| match row.iter().position(|&a| a == 0) {
            Some(0) => StateIndex {
                value: grid[0],
                flag: IndexFlag::AtOrBelowGrid,
                bracket_width: 0.0,
            },
            Some(j) => StateIndex {
                value: grid[j],
                flag: IndexFlag::Interior,
                bracket_width: grid[j] - grid[j - 1],
            },
            None => StateIndex {
                value: f64::INFINITY,
                flag: IndexFlag::AboveGrid,
                bracket_width: 0.0,
            },
        })
        .collect();
    IndexReport {
        indexable: true,
        whittle_index,
        witnesses: Vec::new(),
        passive_sets: sets,
    }
}

/// Row-monotonicity and nested-passive-set verdicts, computed separately.
pub fn indexability_both_ways(policy: &PolicyMatrix) -> (bool, bool) {
    (rows_non_increasing(policy), passive_sets_nested(&passive_sets(policy)))
}

/// Policy matrix together with the report derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexAnalysis {
    pub policy: PolicyMatrix,
    pub report: IndexReport,
}

/// Policy matrix, verdict and (optionally bisection-refined) indices.
pub fn analyze(
    model: &ArmModel,
    grid: &SubsidyGrid,
    config: &SolverConfig,
    refine: bool,
) -> Result<IndexAnalysis, IndexError> {
    let policy = compute_policy_matrix(model, grid, config)?;
    let mut report = verify_indexability(&policy);
    if refine && report.indexable {
        let grid_pts = grid.points();
        let refined: Result<Vec<StateIndex>, IndexError> = report
            .whittle_index
            .par_iter()
            .enumerate()
            .map(|(s, idx)| {
                if idx.flag != IndexFlag::Interior {
                    return Ok(*idx);
                }
                let j = grid_pts.iter().position(|&p| p == idx.value).expect("grid point");
                refine_threshold(model, config, s, grid_pts[j - 1], grid_pts[j])
            })
            .collect();
        report.whittle_index = refined?;
    }
    Ok(IndexAnalysis { policy, report })
}

/// Indexability verdict with Whittle indices (no indices when non-indexable).
pub fn compute_whittle_indices(
    model: &ArmModel,
    grid: &SubsidyGrid,
    config: &SolverConfig,
    refine: bool,
) -> Result<IndexReport, IndexError> {
    analyze(model, grid, config, refine).map(|a| a.report)
}

/// Bisects `(active_at, passive_at]` until narrower than 1/100 of the
/// starting bracket, re-solving from scratch at each probe.
fn refine_threshold(
    model: &ArmModel,
    config: &SolverConfig,
    s: usize,
    active_at: f64,
    passive_at: f64,
) -> Result<StateIndex, IndexError> {
    let target = (passive_at - active_at) / 100.0;
    let (mut lo, mut hi) = (active_at, passive_at);
    while hi - lo >= target {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let t = solve_value_function(model, mid, config);
        if !t.converged {
            return Err(IndexError::NotConverged {
                subsidy: mid,
                iterations: t.iterations_used,
            });
        }
        if t.action(s, config.action_tolerance) == Action::Passive {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(StateIndex {
        value: hi,
        flag: IndexFlag::Interior,
        bracket_width: hi - lo,
    })
}

/// Smallest passive state per column (1-based), `None` for all-active columns.
pub fn threshold_state_curve(policy: &PolicyMatrix) -> Vec<Option<usize>> {
    (0..policy.grid.len())
        .map(|j| (0..policy.num_states()).find(|&s| policy.actions[s][j] == 0).map(|s| s + 1))
        .collect()
}
