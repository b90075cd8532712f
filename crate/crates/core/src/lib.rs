//! Restless multi-armed bandits: subsidy value iteration, indexability
//! verification, Whittle indices, and myopic / index / rollout policies.

pub mod fixtures;
pub mod indexability;
pub mod io;
pub mod model;
pub mod policies;
pub mod sim;
pub mod solver;
pub mod structure;
