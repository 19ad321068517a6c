//! Online stagnation-region detectors, one per non-anchor queue.
//!
//! Two detectors are provided:
//!
//! * [`VacillationDetector`] watches the moving average of the expansion
//!   delay `Δe` over the last `ω` expansions of its queue. It enters a
//!   stagnation region once a full window averages at least `τ` and leaves
//!   it only when every delay in the window equals one.
//! * [`HeuristicDetector`] watches the heuristic values of expanded states.
//!   With `κ(i, ω)` the minimum of `h` over expansions `i-ω ..= i`, the
//!   queue is stagnating while `κ(i, ω1) ≥ κ(i-ω2, ω1-ω2) - ε`, i.e. while
//!   the last `ω2` expansions failed to lower the minimum by more than `ε`.
//!   Membership is re-evaluated after every expansion.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    Vacillation,
    HeuristicBased,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Entered,
    Exited,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectorError {
    #[error("expansion delay must be at least 1, got {0}")]
    DelayTooSmall(u64),
    #[error("heuristic value must be a non-negative number, got {0}")]
    BadHeuristic(f64),
    #[error("history of {len} values does not cover expansions {from}..={to}")]
    InsufficientHistory { len: usize, from: i64, to: usize },
}

fn transition(was: bool, now: bool) -> Verdict {
    match (was, now) {
        (false, true) => Verdict::Entered,
        (true, false) => Verdict::Exited,
        _ => Verdict::Unchanged,
    }
}

#[derive(Clone, Debug)]
pub struct VacillationDetector {
    omega: usize,
    tau: f64,
    window: VecDeque<u64>,
    sum: u64,
    in_stagnation: bool,
}

impl VacillationDetector {
    pub fn new(omega: usize, tau: f64) -> Self {
        assert!(omega > 0);
        Self {
            omega,
            tau,
            window: VecDeque::with_capacity(omega),
            sum: 0,
            in_stagnation: false,
        }
    }

    pub fn observe(&mut self, delta_e: u64) -> Result<Verdict, DetectorError> {
        if delta_e < 1 {
            return Err(DetectorError::DelayTooSmall(delta_e));
        }
        if self.window.len() == self.omega {
            self.sum -= self.window.pop_front().unwrap();
        }
        self.window.push_back(delta_e);
        self.sum += delta_e;

        let was = self.in_stagnation;
        if !was {
            // entry needs a full window
            if self.window.len() == self.omega && self.mean() >= self.tau {
                self.in_stagnation = true;
            }
        } else if self.sum == self.window.len() as u64 {
            self.in_stagnation = false;
        }
        Ok(transition(was, self.in_stagnation))
    }

    /// Mean delay over the (possibly partial) window.
    pub fn mean(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.sum as f64 / self.window.len() as f64
        }
    }

    pub fn window(&self) -> impl Iterator<Item = u64> + '_ {
        self.window.iter().copied()
    }

    pub fn in_stagnation(&self) -> bool {
        self.in_stagnation
    }

    pub fn reset(&mut self) {
        self.window.clear();
        self.sum = 0;
        self.in_stagnation = false;
    }
}

/// `κ(i, ω)`: minimum of `h` over expansions `i-ω ..= i`.
///
/// `history[0]` holds the heuristic value of expansion 1.
pub fn kappa(history: &[f64], i: usize, omega: usize) -> Result<f64, DetectorError> {
    let from = i as i64 - omega as i64;
    if from < 1 || i > history.len() {
        return Err(DetectorError::InsufficientHistory {
            len: history.len(),
            from,
            to: i,
        });
    }
    Ok(history[from as usize - 1..i]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min))
}

/// Sliding-window minimum keyed by expansion index.
#[derive(Clone, Debug, Default)]
struct WindowMin {
    queue: VecDeque<(usize, f64)>,
}

impl WindowMin {
    fn push(&mut self, index: usize, value: f64) {
        while self.queue.back().is_some_and(|(_, v)| *v >= value) {
            self.queue.pop_back();
        }
        self.queue.push_back((index, value));
    }

    fn evict_before(&mut self, index: usize) {
        while self.queue.front().is_some_and(|(i, _)| *i < index) {
            self.queue.pop_front();
        }
    }

    fn min(&self) -> Option<f64> {
        self.queue.front().map(|(_, v)| *v)
    }

    fn clear(&mut self) {
        self.queue.clear();
    }
}

#[derive(Clone, Debug)]
pub struct HeuristicDetector {
    omega1: usize,
    omega2: usize,
    epsilon: f64,
    /// Last `ω1 + 1` values, enough to cover the inclusive window.
    history: VecDeque<f64>,
    count: usize,
    recent: WindowMin,
    older: WindowMin,
    in_stagnation: bool,
}

impl HeuristicDetector {
    pub fn new(omega1: usize, omega2: usize, epsilon: f64) -> Self {
        assert!(omega1 > omega2 && omega2 > 0);
        Self {
            omega1,
            omega2,
            epsilon,
            history: VecDeque::with_capacity(omega1 + 1),
            count: 0,
            recent: WindowMin::default(),
            older: WindowMin::default(),
            in_stagnation: false,
        }
    }

    pub fn observe(&mut self, h: f64) -> Result<Verdict, DetectorError> {
        if !(h >= 0.0) {
            return Err(DetectorError::BadHeuristic(h));
        }
        self.count += 1;
        let i = self.count;
        if self.history.len() == self.omega1 + 1 {
            self.history.pop_front();
        }
        self.history.push_back(h);

        self.recent.push(i, h);
        if i > self.omega2 {
            let lagged = self.history[self.history.len() - 1 - self.omega2];
            self.older.push(i - self.omega2, lagged);
        }

        let was = self.in_stagnation;
        if i > self.omega1 {
            let lo = i - self.omega1;
            self.recent.evict_before(lo);
            self.older.evict_before(lo);
            let now = self.recent.min().unwrap();
            let before = self.older.min().unwrap();
            self.in_stagnation = now >= before - self.epsilon;
        }
        Ok(transition(was, self.in_stagnation))
    }

    /// `κ(i, ω1)` and `κ(i-ω2, ω1-ω2)` for the latest expansion, once the
    /// window is full.
    pub fn kappas(&self) -> Option<(f64, f64)> {
        if self.count > self.omega1 {
            Some((self.recent.min()?, self.older.min()?))
        } else {
            None
        }
    }

    pub fn observations(&self) -> usize {
        self.count
    }

    pub fn in_stagnation(&self) -> bool {
        self.in_stagnation
    }

    pub fn reset(&mut self) {
        self.history.clear();
        self.count = 0;
        self.recent.clear();
        self.older.clear();
        self.in_stagnation = false;
    }
}

/// Detector attached to a non-anchor queue.
#[derive(Clone, Debug)]
pub enum StagnationDetector {
    Vacillation(VacillationDetector),
    Heuristic(HeuristicDetector),
}

impl StagnationDetector {
    /// Feeds one expansion of the owning queue.
    pub fn observe(&mut self, delta_e: u64, h: f64) -> Result<Verdict, DetectorError> {
        match self {
            Self::Vacillation(d) => d.observe(delta_e),
            Self::Heuristic(d) => d.observe(h),
        }
    }

    pub fn in_stagnation(&self) -> bool {
        match self {
            Self::Vacillation(d) => d.in_stagnation(),
            Self::Heuristic(d) => d.in_stagnation(),
        }
    }

    pub fn reset(&mut self) {
        match self {
            Self::Vacillation(d) => d.reset(),
            Self::Heuristic(d) => d.reset(),
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Self::Vacillation(_) => DetectorKind::Vacillation,
            Self::Heuristic(_) => DetectorKind::HeuristicBased,
        }
    }
}
