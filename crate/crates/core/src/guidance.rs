//! User guidance: snapping an intermediate configuration onto the lattice
//! and the dynamic heuristic built from it.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domains::{Domain, HeuristicFn, SnapError, StateId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GuidanceError {
    #[error("invalid guidance: {0}")]
    Invalid(#[from] SnapError),
    #[error("guidance is {distance:.3} from the nearest lattice state, tolerance is {tolerance}")]
    OutOfTolerance { distance: f64, tolerance: f64 },
}

/// A guidance configuration snapped onto a valid lattice state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfiguration {
    pub raw: Vec<f64>,
    pub snapped: StateId,
    /// Configuration of the snapped state.
    pub snapped_configuration: Vec<f64>,
    pub distance: f64,
    /// Global expansion count when the guidance arrived.
    pub created_at: u64,
}

pub fn snap_guidance(
    domain: &dyn Domain,
    raw: &[f64],
    tolerance: f64,
    created_at: u64,
) -> Result<GuidanceConfiguration, GuidanceError> {
    let (snapped, distance) = domain.snap(raw)?;
    if distance > tolerance {
        return Err(GuidanceError::OutOfTolerance { distance, tolerance });
    }
    Ok(GuidanceConfiguration {
        raw: raw.to_vec(),
        snapped,
        snapped_configuration: domain.configuration(snapped),
        distance,
        created_at,
    })
}

/// `ĥ(s) = h_q̂(s) + h_goal(q̂)` until the best path to `s` passes through
/// `q̂`, then `h_goal(s)`.
#[derive(Clone)]
pub struct DynamicHeuristic {
    guidance: GuidanceConfiguration,
    toward: HeuristicFn,
    goal: HeuristicFn,
    goal_from_guidance: f64,
    reached: bool,
}

impl DynamicHeuristic {
    pub fn new(domain: &dyn Domain, guidance: GuidanceConfiguration, goal: HeuristicFn) -> Self {
        let toward = domain.toward(guidance.snapped);
        Self::with_heuristics(guidance, toward, goal)
    }

    pub fn with_heuristics(guidance: GuidanceConfiguration, toward: HeuristicFn, goal: HeuristicFn) -> Self {
        let goal_from_guidance = goal(guidance.snapped);
        Self {
            guidance,
            toward,
            goal,
            goal_from_guidance,
            reached: false,
        }
    }

    pub fn guidance(&self) -> &GuidanceConfiguration {
        &self.guidance
    }

    pub fn target(&self) -> StateId {
        self.guidance.snapped
    }

    pub fn evaluate(&self, state: StateId, via_guidance: bool) -> f64 {
        if via_guidance {
            (self.goal)(state)
        } else {
            (self.toward)(state) + self.goal_from_guidance
        }
    }

    /// True once some expanded state's best path passed through `q̂`.
    pub fn guidance_reached(&self) -> bool {
        self.reached
    }

    pub(crate) fn mark_reached(&mut self) {
        self.reached = true;
    }
}

impl fmt::Debug for DynamicHeuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicHeuristic")
            .field("guidance", &self.guidance)
            .field("reached", &self.reached)
            .finish_non_exhaustive()
    }
}
