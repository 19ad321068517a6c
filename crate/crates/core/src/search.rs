//! Shared multi-heuristic A*.
//!
//! All queues share one table of cost-to-come values. Queue 0 is the anchor,
//! driven by a consistent heuristic; queue 1 is the baseline; further queues
//! are dynamic queues built from user guidance. Non-anchor queues are
//! visited round-robin, and a candidate queue may only expand while its best
//! key is within `w2` times the anchor's best key; otherwise the anchor
//! expands. Every state is expanded at most once by the anchor and at most
//! once by the non-anchor queues together, and the returned cost is within
//! `w1 * w2` of optimal.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{DetectorKind, HeuristicDetector, StagnationDetector, VacillationDetector, Verdict};
use crate::domains::{HeuristicFn, Problem, StateId};
use crate::guidance::{snap_guidance, DynamicHeuristic, GuidanceConfiguration, GuidanceError};
use crate::open_list::{OpenList, Priority};

pub type QueueId = usize;

pub const ANCHOR: QueueId = 0;
pub const BASELINE: QueueId = 1;

/// How many recent expansions each queue remembers for guidance requests.
pub const RECENT_EXPANSIONS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueRole {
    Anchor,
    Baseline,
    Dynamic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QueueStatus {
    Active,
    Suspended,
    Discarded,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    /// Heuristic inflation.
    pub w1: f64,
    /// Anchor-priority factor.
    pub w2: f64,
    #[serde(alias = "detector")]
    pub detector_kind: DetectorKind,
    pub omega: usize,
    pub tau: f64,
    pub omega1: usize,
    pub omega2: usize,
    pub epsilon: f64,
    pub expansion_budget: u64,
    pub snap_tolerance: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            w1: 10.0,
            w2: 2.0,
            detector_kind: DetectorKind::Vacillation,
            omega: 10,
            tau: 30.0,
            omega1: 200,
            omega2: 50,
            epsilon: 50.0,
            expansion_budget: 200_000,
            snap_tolerance: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("w1 must be at least 1, got {0}")]
    W1(f64),
    #[error("w2 must be at least 1, got {0}")]
    W2(f64),
    #[error("omega must be positive")]
    Omega,
    #[error("tau must exceed 1, got {0}")]
    Tau(f64),
    #[error("omega2 must be positive")]
    Omega2,
    #[error("omega1 must exceed omega2")]
    Omega1,
    #[error("epsilon must be non-negative, got {0}")]
    Epsilon(f64),
    #[error("snap tolerance must be non-negative, got {0}")]
    SnapTolerance(f64),
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.w1 >= 1.0 && self.w1.is_finite()) {
            return Err(ConfigError::W1(self.w1));
        }
        if !(self.w2 >= 1.0 && self.w2.is_finite()) {
            return Err(ConfigError::W2(self.w2));
        }
        if self.omega == 0 {
            return Err(ConfigError::Omega);
        }
        if !(self.tau > 1.0) {
            return Err(ConfigError::Tau(self.tau));
        }
        if self.omega2 == 0 {
            return Err(ConfigError::Omega2);
        }
        if self.omega1 <= self.omega2 {
            return Err(ConfigError::Omega1);
        }
        if !(self.epsilon >= 0.0) {
            return Err(ConfigError::Epsilon(self.epsilon));
        }
        if !(self.snap_tolerance >= 0.0) {
            return Err(ConfigError::SnapTolerance(self.snap_tolerance));
        }
        Ok(())
    }

    pub fn detector(&self) -> StagnationDetector {
        match self.detector_kind {
            DetectorKind::Vacillation => StagnationDetector::Vacillation(VacillationDetector::new(self.omega, self.tau)),
            DetectorKind::HeuristicBased => {
                StagnationDetector::Heuristic(HeuristicDetector::new(self.omega1, self.omega2, self.epsilon))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SearchError {
    #[error("invalid planner configuration: {0}")]
    Config(#[from] ConfigError),
    #[error("start state {0} is not a valid collision-free state")]
    InvalidStart(StateId),
    #[error("all open lists are empty: no solution exists on this lattice")]
    SpaceExhausted,
    #[error("expansion budget of {0} exhausted")]
    BudgetExhausted(u64),
    #[error("a solution has already been found")]
    AlreadySolved,
    #[error("a dynamic queue is already active")]
    DynamicQueueExists,
    #[error("no queue with id {0}")]
    UnknownQueue(QueueId),
    #[error("queue {0} is permanent; only dynamic queues change status")]
    PermanentQueue(QueueId),
    #[error("queue {0} was discarded; discarded is terminal")]
    DiscardedIsTerminal(QueueId),
    #[error(transparent)]
    Guidance(#[from] GuidanceError),
}

/// Per-state search bookkeeping, shared by all queues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchState {
    pub g: f64,
    pub parent: Option<StateId>,
    /// Global expansion count when the state was generated or last improved.
    pub stamp: u64,
    /// The best path to this state passes through the live guidance state.
    pub via_guidance: bool,
    pub closed_anchor: bool,
    pub closed_inadmissible: bool,
}

#[derive(Clone)]
pub enum QueueHeuristic {
    Fixed(HeuristicFn),
    Dynamic(DynamicHeuristic),
}

impl QueueHeuristic {
    fn evaluate(&self, id: StateId, via_guidance: bool) -> f64 {
        match self {
            Self::Fixed(h) => h(id),
            Self::Dynamic(d) => d.evaluate(id, via_guidance),
        }
    }
}

impl fmt::Debug for QueueHeuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(_) => f.write_str("Fixed"),
            Self::Dynamic(d) => d.fmt(f),
        }
    }
}

#[derive(Clone, Debug)]
pub struct HeuristicQueue {
    pub id: QueueId,
    pub role: QueueRole,
    pub heuristic: QueueHeuristic,
    pub open: OpenList,
    pub status: QueueStatus,
    pub detector: Option<StagnationDetector>,
    pub expansions: u64,
    /// Latest expansions from this queue with their heuristic values.
    pub recent: VecDeque<(StateId, f64)>,
}

impl HeuristicQueue {
    fn new(id: QueueId, role: QueueRole, heuristic: QueueHeuristic, detector: Option<StagnationDetector>) -> Self {
        Self {
            id,
            role,
            heuristic,
            open: OpenList::new(),
            status: QueueStatus::Active,
            detector,
            expansions: 0,
            recent: VecDeque::with_capacity(RECENT_EXPANSIONS),
        }
    }

    pub fn in_stagnation(&self) -> bool {
        self.detector.as_ref().is_some_and(|d| d.in_stagnation())
    }

    pub fn dynamic(&self) -> Option<&DynamicHeuristic> {
        match &self.heuristic {
            QueueHeuristic::Dynamic(d) => Some(d),
            QueueHeuristic::Fixed(_) => None,
        }
    }
}

/// What one call to [`Planner::expand_next`] did.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionRecord {
    /// Global expansion count after this expansion.
    pub expansion: u64,
    pub queue: QueueId,
    pub role: QueueRole,
    pub state: StateId,
    pub g: f64,
    /// Heuristic value of the state under the expanding queue.
    pub h: f64,
    pub delta_e: u64,
    /// Successors whose cost-to-come improved.
    pub successors: Vec<StateId>,
    /// Detector transition of the expanding queue.
    pub verdict: Option<Verdict>,
    pub goal: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub path: Vec<StateId>,
    pub cost: f64,
}

#[derive(Clone)]
pub struct Planner {
    problem: Problem,
    config: PlannerConfig,
    index: HashMap<StateId, u32>,
    ids: Vec<StateId>,
    nodes: Vec<SearchState>,
    children: Vec<Vec<u32>>,
    queues: Vec<HeuristicQueue>,
    cursor: usize,
    expansions: u64,
    goal_state: Option<StateId>,
    guidance_target: Option<StateId>,
    scratch: Vec<(StateId, f64)>,
}

impl fmt::Debug for Planner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Planner")
            .field("config", &self.config)
            .field("states", &self.nodes.len())
            .field("expansions", &self.expansions)
            .field("queues", &self.queues.len())
            .finish_non_exhaustive()
    }
}

impl Planner {
    /// Builds the anchor and baseline queues and opens the start state.
    pub fn new(problem: Problem, config: PlannerConfig) -> Result<Self, SearchError> {
        config.validate()?;
        if !problem.domain.is_valid(problem.start) {
            return Err(SearchError::InvalidStart(problem.start));
        }
        let queues = vec![
            HeuristicQueue::new(ANCHOR, QueueRole::Anchor, QueueHeuristic::Fixed(problem.anchor.clone()), None),
            HeuristicQueue::new(
                BASELINE,
                QueueRole::Baseline,
                QueueHeuristic::Fixed(problem.baseline.clone()),
                Some(config.detector()),
            ),
        ];
        let mut planner = Self {
            problem,
            config,
            index: HashMap::new(),
            ids: Vec::new(),
            nodes: Vec::new(),
            children: Vec::new(),
            queues,
            cursor: 0,
            expansions: 0,
            goal_state: None,
            guidance_target: None,
            scratch: Vec::new(),
        };
        let start = planner.problem.start;
        let node = planner.node_for(start);
        planner.nodes[node as usize].g = 0.0;
        for q in [ANCHOR, BASELINE] {
            planner.push_open(q, node);
        }
        Ok(planner)
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn expansions(&self) -> u64 {
        self.expansions
    }

    pub fn queues(&self) -> &[HeuristicQueue] {
        &self.queues
    }

    pub fn queue(&self, id: QueueId) -> Option<&HeuristicQueue> {
        self.queues.get(id)
    }

    pub fn state(&self, id: StateId) -> Option<&SearchState> {
        self.index.get(&id).map(|&n| &self.nodes[n as usize])
    }

    /// Every generated state.
    pub fn states(&self) -> impl Iterator<Item = (StateId, &SearchState)> + '_ {
        self.ids.iter().copied().zip(self.nodes.iter())
    }

    /// The snapped guidance state of the live (active or suspended) dynamic
    /// queue.
    pub fn guidance_target(&self) -> Option<StateId> {
        self.guidance_target
    }

    /// The non-discarded dynamic queue, if any.
    pub fn live_dynamic(&self) -> Option<&HeuristicQueue> {
        self.queues
            .iter()
            .find(|q| q.role == QueueRole::Dynamic && q.status != QueueStatus::Discarded)
    }

    pub fn is_solved(&self) -> bool {
        self.goal_state.is_some()
    }

    /// Heuristic value of `id` under queue `q`.
    pub fn heuristic(&self, q: QueueId, id: StateId) -> f64 {
        let via = self.state(id).is_some_and(|s| s.via_guidance);
        self.queues[q].heuristic.evaluate(id, via)
    }

    fn node_for(&mut self, id: StateId) -> u32 {
        if let Some(&n) = self.index.get(&id) {
            return n;
        }
        let n = self.nodes.len() as u32;
        self.index.insert(id, n);
        self.ids.push(id);
        self.nodes.push(SearchState {
            g: f64::INFINITY,
            parent: None,
            stamp: 0,
            via_guidance: Some(id) == self.guidance_target,
            closed_anchor: false,
            closed_inadmissible: false,
        });
        self.children.push(Vec::new());
        n
    }

    fn priority(&self, q: QueueId, node: u32) -> Priority {
        let s = &self.nodes[node as usize];
        let h = self.queues[q].heuristic.evaluate(self.ids[node as usize], s.via_guidance);
        Priority {
            f: s.g + self.config.w1 * h,
            g: s.g,
        }
    }

    fn push_open(&mut self, q: QueueId, node: u32) {
        let p = self.priority(q, node);
        let id = self.ids[node as usize];
        self.queues[q].open.push(id, p);
    }

    fn next_candidate(&mut self) -> Option<QueueId> {
        let n = self.queues.len();
        for step in 1..=n {
            let q = (self.cursor + step) % n;
            if q != ANCHOR && self.queues[q].status == QueueStatus::Active {
                self.cursor = q;
                return Some(q);
            }
        }
        None
    }

    /// Picks the queue for the next expansion.
    fn select(&mut self) -> Option<QueueId> {
        let anchor_key = self.queues[ANCHOR].open.min_key();
        let candidate = self.next_candidate();
        if let Some(q) = candidate {
            let key = self.queues[q].open.min_key();
            match (key, anchor_key) {
                (Some(k), Some(a)) if k <= self.config.w2 * a => return Some(q),
                (Some(_), None) => return Some(q),
                _ => {}
            }
        }
        if anchor_key.is_some() {
            return Some(ANCHOR);
        }
        // anchor open ⊇ every other open list, so this is only reachable
        // when everything is empty
        self.queues
            .iter()
            .position(|q| q.status == QueueStatus::Active && !q.open.is_empty())
    }

    /// Expands one state according to the anchor-controlled round-robin rule.
    pub fn expand_next(&mut self) -> Result<ExpansionRecord, SearchError> {
        if self.goal_state.is_some() {
            return Err(SearchError::AlreadySolved);
        }
        if self.expansions >= self.config.expansion_budget {
            return Err(SearchError::BudgetExhausted(self.config.expansion_budget));
        }
        let q = self.select().ok_or(SearchError::SpaceExhausted)?;
        let (id, _) = self.queues[q].open.pop().ok_or(SearchError::SpaceExhausted)?;
        for queue in &mut self.queues {
            queue.open.remove(id);
        }
        let node = self.index[&id];

        self.expansions += 1;
        let e_curr = self.expansions;
        let role = self.queues[q].role;
        let (g, stamp, via) = {
            let s = &mut self.nodes[node as usize];
            if role == QueueRole::Anchor {
                s.closed_anchor = true;
            } else {
                s.closed_inadmissible = true;
            }
            (s.g, s.stamp, s.via_guidance)
        };
        let delta_e = e_curr - stamp;
        let h = self.queues[q].heuristic.evaluate(id, via);
        if via {
            if let Some(dq) = self.live_dynamic_mut() {
                if let QueueHeuristic::Dynamic(d) = &mut dq.heuristic {
                    d.mark_reached();
                }
            }
        }

        let queue = &mut self.queues[q];
        queue.expansions += 1;
        if queue.recent.len() == RECENT_EXPANSIONS {
            queue.recent.pop_front();
        }
        queue.recent.push_back((id, h));
        let verdict = match queue.detector.as_mut() {
            Some(d) => Some(d.observe(delta_e.max(1), h).expect("delay >= 1 and h >= 0")),
            None => None,
        };

        let goal = (self.problem.goal)(id);
        if goal {
            self.goal_state = Some(id);
        }

        let mut succ = std::mem::take(&mut self.scratch);
        succ.clear();
        self.problem.domain.successors(id, &mut succ);
        let mut improved = Vec::new();
        for &(t, cost) in &succ {
            let new_g = g + cost;
            let tn = self.node_for(t);
            if new_g >= self.nodes[tn as usize].g {
                continue;
            }
            self.nodes[tn as usize].g = new_g;
            self.nodes[tn as usize].stamp = e_curr;
            self.reparent(tn, node);
            improved.push(t);
            let (closed_anchor, closed_inad) = {
                let s = &self.nodes[tn as usize];
                (s.closed_anchor, s.closed_inadmissible)
            };
            if closed_anchor {
                continue;
            }
            self.push_open(ANCHOR, tn);
            if !closed_inad {
                for qi in 1..self.queues.len() {
                    if self.queues[qi].status == QueueStatus::Active {
                        self.push_open(qi, tn);
                    }
                }
            }
        }
        self.scratch = succ;

        Ok(ExpansionRecord {
            expansion: e_curr,
            queue: q,
            role,
            state: id,
            g,
            h,
            delta_e,
            successors: improved,
            verdict,
            goal,
        })
    }

    fn live_dynamic_mut(&mut self) -> Option<&mut HeuristicQueue> {
        self.queues
            .iter_mut()
            .find(|q| q.role == QueueRole::Dynamic && q.status != QueueStatus::Discarded)
    }

    fn active_dynamic(&self) -> Option<QueueId> {
        self.queues
            .iter()
            .position(|q| q.role == QueueRole::Dynamic && q.status == QueueStatus::Active)
    }

    fn compute_flag(&self, node: u32) -> bool {
        if Some(self.ids[node as usize]) == self.guidance_target {
            return true;
        }
        self.nodes[node as usize]
            .parent
            .is_some_and(|p| self.nodes[self.index[&p] as usize].via_guidance)
    }

    /// Points `node` at a new parent and refreshes the guidance flag of its
    /// whole subtree.
    fn reparent(&mut self, node: u32, parent: u32) {
        if let Some(old) = self.nodes[node as usize].parent {
            let old = self.index[&old] as usize;
            if let Some(pos) = self.children[old].iter().position(|&c| c == node) {
                self.children[old].swap_remove(pos);
            }
        }
        self.nodes[node as usize].parent = Some(self.ids[parent as usize]);
        self.children[parent as usize].push(node);
        self.on_parent_change(node);
    }

    /// Recomputes `via_guidance` for `node` and, where it flips, for its
    /// descendants; open entries of the active dynamic queue are re-keyed.
    fn on_parent_change(&mut self, node: u32) {
        let flag = self.compute_flag(node);
        if flag == self.nodes[node as usize].via_guidance {
            return;
        }
        self.nodes[node as usize].via_guidance = flag;
        let dynamic = self.active_dynamic();
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            for i in 0..self.children[n as usize].len() {
                let c = self.children[n as usize][i];
                let flag = self.compute_flag(c);
                if flag != self.nodes[c as usize].via_guidance {
                    self.nodes[c as usize].via_guidance = flag;
                    if let Some(dq) = dynamic {
                        if self.queues[dq].open.contains(self.ids[c as usize]) {
                            self.push_open(dq, c);
                        }
                    }
                    stack.push(c);
                }
            }
        }
    }

    /// Recomputes every guidance flag from the start state down.
    fn recompute_flags(&mut self) {
        let Some(&root) = self.index.get(&self.problem.start) else {
            return;
        };
        for s in &mut self.nodes {
            s.via_guidance = false;
        }
        let mut stack = vec![root];
        while let Some(n) = stack.pop() {
            self.nodes[n as usize].via_guidance = self.compute_flag(n);
            stack.extend(self.children[n as usize].iter().copied());
        }
    }

    /// Snaps a raw configuration with this planner's tolerance.
    pub fn snap(&self, raw: &[f64]) -> Result<GuidanceConfiguration, GuidanceError> {
        snap_guidance(
            self.problem.domain.as_ref(),
            raw,
            self.config.snap_tolerance,
            self.expansions,
        )
    }

    /// Builds `ĥ` for a snapped guidance configuration against the baseline.
    pub fn dynamic_heuristic(&self, guidance: GuidanceConfiguration) -> DynamicHeuristic {
        DynamicHeuristic::new(self.problem.domain.as_ref(), guidance, self.problem.baseline.clone())
    }

    /// Adds a dynamic queue and seeds it from the current open lists.
    pub fn add_dynamic_queue(&mut self, heuristic: DynamicHeuristic) -> Result<QueueId, SearchError> {
        if self.live_dynamic().is_some() {
            return Err(SearchError::DynamicQueueExists);
        }
        self.guidance_target = Some(heuristic.target());
        self.recompute_flags();
        let id = self.queues.len();
        self.queues.push(HeuristicQueue::new(
            id,
            QueueRole::Dynamic,
            QueueHeuristic::Dynamic(heuristic),
            Some(self.config.detector()),
        ));
        self.seed(id);
        Ok(id)
    }

    fn seed(&mut self, q: QueueId) {
        let mut ids: Vec<StateId> = self
            .queues
            .iter()
            .filter(|other| other.id != q && other.status == QueueStatus::Active)
            .flat_map(|other| other.open.ids())
            .collect();
        ids.sort_unstable();
        ids.dedup();
        self.queues[q].open.clear();
        for id in ids {
            let node = self.index[&id];
            if !self.nodes[node as usize].closed_inadmissible {
                self.push_open(q, node);
            }
        }
    }

    pub fn set_queue_status(&mut self, q: QueueId, status: QueueStatus) -> Result<(), SearchError> {
        let queue = self.queues.get(q).ok_or(SearchError::UnknownQueue(q))?;
        if queue.role != QueueRole::Dynamic {
            return Err(SearchError::PermanentQueue(q));
        }
        let from = queue.status;
        match (from, status) {
            (QueueStatus::Discarded, _) => Err(SearchError::DiscardedIsTerminal(q)),
            (a, b) if a == b => Ok(()),
            (QueueStatus::Active, QueueStatus::Suspended) => {
                self.queues[q].status = QueueStatus::Suspended;
                Ok(())
            }
            (QueueStatus::Suspended, QueueStatus::Active) => {
                if self.active_dynamic().is_some() {
                    return Err(SearchError::DynamicQueueExists);
                }
                self.queues[q].status = QueueStatus::Active;
                self.seed(q);
                if let Some(d) = self.queues[q].detector.as_mut() {
                    d.reset();
                }
                Ok(())
            }
            (_, QueueStatus::Discarded) => {
                let queue = &mut self.queues[q];
                queue.status = QueueStatus::Discarded;
                queue.open.clear();
                self.guidance_target = None;
                for s in &mut self.nodes {
                    s.via_guidance = false;
                }
                Ok(())
            }
            _ => unreachable!(),
        }
    }

    /// Path to the first expanded goal state, reconstructed by parent links.
    pub fn solution(&self) -> Option<Solution> {
        let goal = self.goal_state?;
        let cost = self.state(goal)?.g;
        let mut path = vec![goal];
        let mut cur = goal;
        while let Some(p) = self.state(cur).and_then(|s| s.parent) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        Some(Solution { path, cost })
    }

    /// Open states of the anchor queue (a superset of every other queue's).
    pub fn open_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.queues[ANCHOR].open.ids()
    }
}
