//! Multi-heuristic A* with human guidance.
//!
//! A [`Planner`] runs shared multi-heuristic A* with an anchor queue, a
//! baseline queue and at most one live dynamic queue built from a guidance
//! configuration. A [`Session`] wraps the planner with stagnation detection
//! and the request/suspend/discard lifecycle, and records every step as a
//! [`SessionEvent`].

pub mod controller;
pub mod detectors;
pub mod domains;
pub mod events;
pub mod guidance;
pub mod open_list;
pub mod scenario;
pub mod search;

pub use controller::{
    replay, restore, run_session, AdversarialProvider, ControllerError, GuidanceAnswer, GuidanceProvider, GuidanceRequest, Phase, ReplayError,
    ScriptedProvider,
    Session, SessionResult, Submission, Totals,
};
pub use detectors::{DetectorKind, HeuristicDetector, StagnationDetector, VacillationDetector, Verdict};
pub use domains::{ArmDomain, CircleObstacle, Domain, GridCell, GridMap, Problem, StateId};
pub use events::{DiscardReason, EventBody, Outcome, SessionEvent, SessionSettings};
pub use guidance::{DynamicHeuristic, GuidanceConfiguration, GuidanceError};
pub use scenario::Scenario;
pub use search::{Planner, PlannerConfig, QueueId, QueueRole, QueueStatus, SearchError, Solution};
