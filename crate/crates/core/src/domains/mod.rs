//! Planning domains: a discrete lattice of states with successors, edge
//! costs, validity checks and the heuristics the planner needs.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub mod arm;
pub mod grid;

pub use arm::{ArmDomain, CircleObstacle};
pub use grid::{GridCell, GridMap};

/// Dense identifier of one lattice state of a domain.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub u64);

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// Cost-to-go estimate over lattice states.
pub type HeuristicFn = Arc<dyn Fn(StateId) -> f64 + Send + Sync>;

/// Goal test over lattice states.
pub type GoalPredicate = Arc<dyn Fn(StateId) -> bool + Send + Sync>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SnapError {
    #[error("configuration has {got} components, domain expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("configuration {0:?} lies outside the domain")]
    OutOfBounds(Vec<f64>),
    #[error("nearest lattice state {0:?} is in collision")]
    InCollision(Vec<f64>),
}

/// A discrete planning domain.
///
/// Implementations are immutable once built and may be shared read-only
/// between planners.
pub trait Domain: Send + Sync {
    /// Length of a configuration vector.
    fn dimension(&self) -> usize;

    /// True when `state` exists on the lattice and is collision-free.
    fn is_valid(&self, state: StateId) -> bool;

    /// Appends `(successor, edge cost)` pairs for a valid state.
    fn successors(&self, state: StateId, out: &mut Vec<(StateId, f64)>);

    /// Configuration vector of a lattice state, in domain units.
    fn configuration(&self, state: StateId) -> Vec<f64>;

    /// Nearest lattice state to a raw configuration, ignoring validity.
    fn nearest(&self, raw: &[f64]) -> Result<StateId, SnapError>;

    /// Domain metric between two configurations.
    fn distance(&self, a: &[f64], b: &[f64]) -> f64;

    /// Heuristic estimating the cost of reaching `target` (the `h_q` family).
    fn toward(&self, target: StateId) -> HeuristicFn;

    /// Snaps a raw configuration onto a valid lattice state; returns the
    /// state together with its distance from `raw`.
    fn snap(&self, raw: &[f64]) -> Result<(StateId, f64), SnapError> {
        if raw.len() != self.dimension() {
            return Err(SnapError::Dimension {
                expected: self.dimension(),
                got: raw.len(),
            });
        }
        let state = self.nearest(raw)?;
        let config = self.configuration(state);
        if !self.is_valid(state) {
            return Err(SnapError::InCollision(config));
        }
        Ok((state, self.distance(raw, &config)))
    }
}

/// Everything a planner needs to search one instance.
#[derive(Clone)]
pub struct Problem {
    pub domain: Arc<dyn Domain>,
    pub start: StateId,
    pub goal: GoalPredicate,
    /// Consistent heuristic driving the anchor queue.
    pub anchor: HeuristicFn,
    /// Goal-directed, possibly inadmissible heuristic (`h_goal`).
    pub baseline: HeuristicFn,
}

impl fmt::Debug for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Problem")
            .field("start", &self.start)
            .finish_non_exhaustive()
    }
}
