//! The guidance loop around the planner.
//!
//! Expand while the baseline queue makes progress. When the baseline
//! stagnates, resume a suspended dynamic queue if there is one, otherwise ask
//! the provider for a guidance configuration and add a dynamic queue for it.
//! Keep expanding while the baseline is still stagnating and the dynamic
//! queue is not. Then remove the dynamic queue: discard it if it stagnated
//! itself or if the search already passed through the guidance, suspend it
//! otherwise.
//!
//! [`Session::step`] performs at most one expansion per call, so callers can
//! interleave guidance from any source; [`run_session`] drives a session to
//! completion against a [`GuidanceProvider`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::Verdict;
use crate::events::{DiscardReason, EventBody, Outcome, SessionEvent, SessionSettings, StateSnapshot};
use crate::scenario::{Scenario, ScenarioError};
use crate::search::{Planner, QueueId, QueueRole, QueueStatus, SearchError, BASELINE};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Running without guidance.
    Searching,
    /// Parked until guidance arrives.
    AwaitingGuidance,
    /// A dynamic queue is active.
    Guided,
    Finished(Outcome),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControllerError {
    #[error("session is finished")]
    Finished,
    #[error("session is waiting for guidance")]
    AwaitingGuidance,
    #[error("session is not waiting for guidance")]
    NotAwaitingGuidance,
    #[error("only a declined session can be reopened")]
    NotDeclined,
    #[error(transparent)]
    Search(#[from] SearchError),
}

/// What the planner shows the human when it asks for help.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidanceRequest {
    pub expansion: u64,
    /// The stagnating queue.
    pub queue: QueueId,
    /// Lowest-`h` state among the queue's recent expansions.
    pub min_h_state: Option<StateSnapshot>,
    /// Configurations of the most recent expansions, oldest first.
    pub recent: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GuidanceAnswer {
    Configuration(Vec<f64>),
    Decline,
}

/// Source of guidance configurations.
pub trait GuidanceProvider {
    fn provide(&mut self, request: &GuidanceRequest, planner: &Planner) -> GuidanceAnswer;
}

/// Answers the i-th request with the i-th configuration; declines once the
/// script runs out.
#[derive(Clone, Debug, Default)]
pub struct ScriptedProvider {
    script: Vec<Vec<f64>>,
    next: usize,
}

impl ScriptedProvider {
    pub fn new(script: Vec<Vec<f64>>) -> Self {
        Self { script, next: 0 }
    }

    pub fn consumed(&self) -> usize {
        self.next
    }
}

impl GuidanceProvider for ScriptedProvider {
    fn provide(&mut self, _: &GuidanceRequest, _: &Planner) -> GuidanceAnswer {
        match self.script.get(self.next) {
            Some(c) => {
                self.next += 1;
                GuidanceAnswer::Configuration(c.clone())
            }
            None => GuidanceAnswer::Decline,
        }
    }
}

/// Always points at the open state farthest from the goal under the
/// baseline heuristic.
#[derive(Clone, Copy, Debug, Default)]
pub struct AdversarialProvider;

impl GuidanceProvider for AdversarialProvider {
    fn provide(&mut self, _: &GuidanceRequest, planner: &Planner) -> GuidanceAnswer {
        let h = &planner.problem().baseline;
        let worst = planner
            .open_states()
            .map(|s| (h(s), s))
            .max_by(|a, b| a.0.total_cmp(&b.0).then(b.1.cmp(&a.1)));
        match worst {
            Some((_, s)) => GuidanceAnswer::Configuration(planner.problem().domain.configuration(s)),
            None => GuidanceAnswer::Decline,
        }
    }
}

impl<F> GuidanceProvider for F
where
    F: FnMut(&GuidanceRequest, &Planner) -> GuidanceAnswer,
{
    fn provide(&mut self, request: &GuidanceRequest, planner: &Planner) -> GuidanceAnswer {
        self(request, planner)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Totals {
    pub expansions: u64,
    pub guidance_requests: u64,
    pub guidances_used: u64,
    pub guidances_discarded_unhelpful: u64,
}

impl Totals {
    /// Recounts the totals from an event log.
    pub fn from_events(events: &[SessionEvent]) -> Self {
        let mut t = Self::default();
        for e in events {
            match &e.body {
                EventBody::Expansion { .. } => t.expansions += 1,
                EventBody::GuidanceRequested { .. } => t.guidance_requests += 1,
                EventBody::GuidanceAdded { .. } => t.guidances_used += 1,
                EventBody::QueueDiscarded {
                    reason: DiscardReason::NotUseful,
                    ..
                } => t.guidances_discarded_unhelpful += 1,
                _ => {}
            }
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub outcome: Outcome,
    pub cost: Option<f64>,
    pub path: Option<Vec<Vec<f64>>>,
    pub totals: Totals,
    pub events: Vec<SessionEvent>,
}

/// Result of handing guidance to a parked session.
#[derive(Clone, Debug, PartialEq)]
pub enum Submission {
    Accepted { queue: QueueId },
    Rejected { reason: String },
    Declined,
}

#[derive(Clone)]
pub struct Session {
    planner: Planner,
    settings: SessionSettings,
    phase: Phase,
    events: Vec<SessionEvent>,
    totals: Totals,
    dynamic: Option<QueueId>,
    pending: Option<GuidanceRequest>,
}

impl Session {
    /// Wraps a planner. The log starts with a `session_created` header
    /// carrying `scenario`, which makes the log replayable.
    pub fn new(planner: Planner, scenario: Option<Scenario>, settings: SessionSettings) -> Self {
        let mut session = Self {
            planner,
            settings: settings.clone(),
            phase: Phase::Searching,
            events: Vec::new(),
            totals: Totals::default(),
            dynamic: None,
            pending: None,
        };
        session.emit(EventBody::SessionCreated {
            scenario: scenario.map(Box::new),
            settings,
        });
        session
    }

    pub fn from_scenario(scenario: &Scenario, settings: SessionSettings) -> Result<Self, ScenarioError> {
        let planner = scenario.planner()?;
        Ok(Self::new(planner, Some(scenario.clone()), settings))
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn settings(&self) -> &SessionSettings {
        &self.settings
    }

    pub fn events(&self) -> &[SessionEvent] {
        &self.events
    }

    pub fn totals(&self) -> Totals {
        self.totals
    }

    pub fn pending_request(&self) -> Option<&GuidanceRequest> {
        self.pending.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        matches!(self.phase, Phase::Finished(_))
    }

    fn emit(&mut self, body: EventBody) {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent { seq, body });
    }

    fn baseline_stagnating(&self) -> bool {
        self.planner.queues()[BASELINE].in_stagnation()
    }

    fn dynamic_stagnating(&self) -> bool {
        self.dynamic
            .and_then(|q| self.planner.queue(q))
            .is_some_and(|q| q.in_stagnation())
    }

    fn suspended_dynamic(&self) -> Option<QueueId> {
        self.planner
            .queues()
            .iter()
            .find(|q| q.role == QueueRole::Dynamic && q.status == QueueStatus::Suspended)
            .map(|q| q.id)
    }

    /// Performs at most one expansion together with the controller
    /// transitions that precede it. Returns the new events.
    pub fn step(&mut self) -> Result<&[SessionEvent], ControllerError> {
        let first = self.events.len();
        loop {
            match self.phase {
                Phase::Finished(_) => return Err(ControllerError::Finished),
                Phase::AwaitingGuidance => return Err(ControllerError::AwaitingGuidance),
                Phase::Searching => {
                    if self.settings.guidance && self.baseline_stagnating() {
                        if let Some(q) = self.suspended_dynamic() {
                            self.planner.set_queue_status(q, QueueStatus::Active)?;
                            let seeded = self.planner.queues()[q].open.len();
                            self.dynamic = Some(q);
                            self.emit(EventBody::QueueResumed {
                                expansion: self.planner.expansions(),
                                queue: q,
                                seeded,
                            });
                            self.phase = Phase::Guided;
                            continue;
                        }
                        self.request_guidance(BASELINE);
                        break;
                    }
                    self.expand();
                    break;
                }
                Phase::Guided => {
                    if self.baseline_stagnating() && !self.dynamic_stagnating() {
                        self.expand();
                        break;
                    }
                    self.remove_guidance()?;
                    self.phase = Phase::Searching;
                }
            }
        }
        Ok(&self.events[first..])
    }

    fn request_guidance(&mut self, queue: QueueId) {
        let q = &self.planner.queues()[queue];
        let domain = &self.planner.problem().domain;
        let window = self.settings.request_window.min(q.recent.len());
        let recent_slice: Vec<_> = q.recent.iter().skip(q.recent.len() - window).collect();
        let min_h_state = recent_slice
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(s, h)| StateSnapshot {
                state: *s,
                configuration: domain.configuration(*s),
                h: *h,
            });
        let recent = recent_slice
            .iter()
            .map(|(s, _)| domain.configuration(*s))
            .collect();
        let request = GuidanceRequest {
            expansion: self.planner.expansions(),
            queue,
            min_h_state,
            recent,
        };
        self.totals.guidance_requests += 1;
        self.emit(EventBody::GuidanceRequested {
            expansion: request.expansion,
            queue: request.queue,
            min_h_state: request.min_h_state.clone(),
            recent: request.recent.clone(),
        });
        self.pending = Some(request);
        self.phase = Phase::AwaitingGuidance;
    }

    fn remove_guidance(&mut self) -> Result<(), ControllerError> {
        let Some(q) = self.dynamic.take() else {
            return Ok(());
        };
        let expansion = self.planner.expansions();
        let reached = self.planner.queues()[q]
            .dynamic()
            .is_some_and(|d| d.guidance_reached());
        if self.planner.queues()[q].in_stagnation() {
            self.planner.set_queue_status(q, QueueStatus::Discarded)?;
            self.totals.guidances_discarded_unhelpful += 1;
            self.emit(EventBody::QueueDiscarded {
                expansion,
                queue: q,
                reason: DiscardReason::NotUseful,
            });
        } else if reached {
            self.planner.set_queue_status(q, QueueStatus::Discarded)?;
            self.emit(EventBody::QueueDiscarded {
                expansion,
                queue: q,
                reason: DiscardReason::PassedThrough,
            });
        } else {
            self.planner.set_queue_status(q, QueueStatus::Suspended)?;
            self.emit(EventBody::QueueSuspended { expansion, queue: q });
        }
        Ok(())
    }

    fn finish(&mut self, outcome: Outcome) {
        self.emit(EventBody::Terminated {
            expansion: self.planner.expansions(),
            outcome,
        });
        self.phase = Phase::Finished(outcome);
    }

    fn expand(&mut self) {
        let rec = match self.planner.expand_next() {
            Ok(rec) => rec,
            Err(SearchError::BudgetExhausted(_)) => return self.finish(Outcome::BudgetExhausted),
            Err(SearchError::SpaceExhausted) => return self.finish(Outcome::SpaceExhausted),
            Err(e) => unreachable!("expand_next on a running session: {e}"),
        };
        self.totals.expansions += 1;
        let configuration = self.planner.problem().domain.configuration(rec.state);
        self.emit(EventBody::Expansion {
            expansion: rec.expansion,
            queue: rec.queue,
            role: rec.role,
            state: rec.state,
            configuration,
            g: rec.g,
            h: rec.h,
            delta_e: rec.delta_e,
        });
        match rec.verdict {
            Some(Verdict::Entered) => self.emit(EventBody::StagnationEntered {
                expansion: rec.expansion,
                queue: rec.queue,
                role: rec.role,
            }),
            Some(Verdict::Exited) => self.emit(EventBody::StagnationExited {
                expansion: rec.expansion,
                queue: rec.queue,
                role: rec.role,
            }),
            _ => {}
        }
        if rec.goal {
            let solution = self.planner.solution().expect("goal expanded");
            let domain = self.planner.problem().domain.clone();
            self.emit(EventBody::Solution {
                expansion: rec.expansion,
                cost: solution.cost,
                path: solution.path.iter().map(|s| domain.configuration(*s)).collect(),
            });
            self.finish(Outcome::Solved);
        }
    }

    /// Hands guidance to a parked session. Invalid configurations are
    /// rejected and the session stays parked.
    pub fn submit(&mut self, answer: GuidanceAnswer) -> Result<Submission, ControllerError> {
        if self.phase != Phase::AwaitingGuidance {
            return Err(ControllerError::NotAwaitingGuidance);
        }
        let expansion = self.planner.expansions();
        let raw = match answer {
            GuidanceAnswer::Decline => {
                self.pending = None;
                self.finish(Outcome::Declined);
                return Ok(Submission::Declined);
            }
            GuidanceAnswer::Configuration(raw) => raw,
        };
        let guidance = match self.planner.snap(&raw) {
            Ok(g) => g,
            Err(e) => {
                let reason = e.to_string();
                self.emit(EventBody::GuidanceRejected {
                    expansion,
                    configuration: raw,
                    reason: reason.clone(),
                });
                return Ok(Submission::Rejected { reason });
            }
        };
        let snapped = guidance.snapped_configuration.clone();
        let state = guidance.snapped;
        let heuristic = self.planner.dynamic_heuristic(guidance);
        let queue = self.planner.add_dynamic_queue(heuristic)?;
        let seeded = self.planner.queues()[queue].open.len();
        self.totals.guidances_used += 1;
        self.dynamic = Some(queue);
        self.pending = None;
        self.emit(EventBody::GuidanceAdded {
            expansion,
            queue,
            configuration: raw,
            snapped,
            state,
            seeded,
        });
        self.phase = Phase::Guided;
        Ok(Submission::Accepted { queue })
    }

    /// Re-opens a session that ended because guidance was declined; the
    /// planner state is untouched and guidance is requested again.
    pub fn reopen(&mut self) -> Result<(), ControllerError> {
        if self.phase != Phase::Finished(Outcome::Declined) {
            return Err(ControllerError::NotDeclined);
        }
        self.request_guidance(BASELINE);
        Ok(())
    }

    pub fn result(&self) -> Option<SessionResult> {
        let Phase::Finished(outcome) = self.phase else {
            return None;
        };
        let solution = self.planner.solution();
        let domain = &self.planner.problem().domain;
        Some(SessionResult {
            outcome,
            cost: solution.as_ref().map(|s| s.cost),
            path: solution.map(|s| s.path.iter().map(|id| domain.configuration(*id)).collect()),
            totals: self.totals,
            events: self.events.clone(),
        })
    }
}

/// Consecutive rejected answers after which [`run_session`] gives up.
pub const MAX_REJECTIONS: usize = 1000;

/// Drives a session until it finishes, asking `provider` whenever it parks.
pub fn run_session(session: &mut Session, provider: &mut dyn GuidanceProvider) -> SessionResult {
    let mut rejections = 0;
    loop {
        match session.phase() {
            Phase::Finished(_) => break,
            Phase::AwaitingGuidance => {
                let request = session.pending.clone().expect("parked session has a request");
                let answer = if rejections >= MAX_REJECTIONS {
                    GuidanceAnswer::Decline
                } else {
                    provider.provide(&request, &session.planner)
                };
                match session.submit(answer).expect("session is parked") {
                    Submission::Rejected { .. } => rejections += 1,
                    _ => rejections = 0,
                }
            }
            _ => {
                session.step().expect("running session steps");
            }
        }
    }
    session.result().expect("finished")
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("log is empty")]
    Empty,
    #[error("log does not start with a session_created header carrying a scenario")]
    MissingHeader,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("re-executed log diverges at seq {seq}")]
    Diverged { seq: u64 },
}

/// Re-executes a log from its header scenario and the guidance answers it
/// recorded, stopping once as many events as the original were produced.
pub fn replay(events: &[SessionEvent]) -> Result<Vec<SessionEvent>, ReplayError> {
    Ok(rerun(events)?.events)
}

/// Rebuilds the live session behind a log, e.g. after a restart. Fails if
/// the re-executed events differ from the log.
pub fn restore(events: &[SessionEvent]) -> Result<Session, ReplayError> {
    let session = rerun(events)?;
    if let Some(seq) = (0..events.len()).find(|&i| session.events.get(i) != Some(&events[i])) {
        return Err(ReplayError::Diverged { seq: seq as u64 });
    }
    Ok(session)
}

fn rerun(events: &[SessionEvent]) -> Result<Session, ReplayError> {
    let first = events.first().ok_or(ReplayError::Empty)?;
    let EventBody::SessionCreated {
        scenario: Some(scenario),
        settings,
    } = &first.body
    else {
        return Err(ReplayError::MissingHeader);
    };
    let mut answers = events.iter().filter_map(|e| match &e.body {
        EventBody::GuidanceAdded { configuration, .. } | EventBody::GuidanceRejected { configuration, .. } => {
            Some(GuidanceAnswer::Configuration(configuration.clone()))
        }
        EventBody::Terminated {
            outcome: Outcome::Declined,
            ..
        } => Some(GuidanceAnswer::Decline),
        _ => None,
    });
    let mut session = Session::from_scenario(scenario, settings.clone())?;
    while session.events.len() < events.len() {
        match session.phase {
            Phase::Finished(Outcome::Declined) => {
                if session.reopen().is_err() {
                    break;
                }
            }
            Phase::Finished(_) => break,
            Phase::AwaitingGuidance => match answers.next() {
                Some(answer) => {
                    session.submit(answer).expect("parked");
                }
                None => break,
            },
            _ => {
                session.step().expect("running session steps");
            }
        }
    }
    Ok(session)
}
