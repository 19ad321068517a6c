//! Session events and their newline-delimited JSON log format.

use std::io::{self, BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domains::StateId;
use crate::scenario::Scenario;
use crate::search::{QueueId, QueueRole};

/// How a session ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Solved,
    BudgetExhausted,
    SpaceExhausted,
    Declined,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// The dynamic queue stagnated itself.
    NotUseful,
    /// The search already passed through the guidance.
    PassedThrough,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub state: StateId,
    pub configuration: Vec<f64>,
    pub h: f64,
}

/// Controller settings recorded in the log header so that a log replays on
/// its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionSettings {
    /// When false the controller never asks for guidance.
    pub guidance: bool,
    /// Recent expansions attached to a guidance request.
    pub request_window: usize,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            guidance: true,
            request_window: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    SessionCreated {
        scenario: Option<Box<Scenario>>,
        settings: SessionSettings,
    },
    Expansion {
        expansion: u64,
        queue: QueueId,
        role: QueueRole,
        state: StateId,
        configuration: Vec<f64>,
        g: f64,
        h: f64,
        delta_e: u64,
    },
    StagnationEntered {
        expansion: u64,
        queue: QueueId,
        role: QueueRole,
    },
    StagnationExited {
        expansion: u64,
        queue: QueueId,
        role: QueueRole,
    },
    GuidanceRequested {
        expansion: u64,
        queue: QueueId,
        min_h_state: Option<StateSnapshot>,
        recent: Vec<Vec<f64>>,
    },
    GuidanceRejected {
        expansion: u64,
        configuration: Vec<f64>,
        reason: String,
    },
    GuidanceAdded {
        expansion: u64,
        queue: QueueId,
        configuration: Vec<f64>,
        snapped: Vec<f64>,
        state: StateId,
        seeded: usize,
    },
    QueueSuspended {
        expansion: u64,
        queue: QueueId,
    },
    QueueResumed {
        expansion: u64,
        queue: QueueId,
        seeded: usize,
    },
    QueueDiscarded {
        expansion: u64,
        queue: QueueId,
        reason: DiscardReason,
    },
    Solution {
        expansion: u64,
        cost: f64,
        path: Vec<Vec<f64>>,
    },
    Terminated {
        expansion: u64,
        outcome: Outcome,
    },
}

impl EventBody {
    /// The `kind` tag as written in the log.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::SessionCreated { .. } => "session_created",
            Self::Expansion { .. } => "expansion",
            Self::StagnationEntered { .. } => "stagnation_entered",
            Self::StagnationExited { .. } => "stagnation_exited",
            Self::GuidanceRequested { .. } => "guidance_requested",
            Self::GuidanceRejected { .. } => "guidance_rejected",
            Self::GuidanceAdded { .. } => "guidance_added",
            Self::QueueSuspended { .. } => "queue_suspended",
            Self::QueueResumed { .. } => "queue_resumed",
            Self::QueueDiscarded { .. } => "queue_discarded",
            Self::Solution { .. } => "solution",
            Self::Terminated { .. } => "terminated",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    #[serde(flatten)]
    pub body: EventBody,
}

impl SessionEvent {
    pub fn kind(&self) -> &'static str {
        self.body.kind()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("events serialize")
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: expected seq {expected}, found {found}")]
    Gap { line: usize, expected: u64, found: u64 },
}

/// Writes one JSON record per line, flushing after every batch.
pub struct EventWriter<W: Write> {
    out: W,
}

impl<W: Write> EventWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out }
    }

    pub fn write_all(&mut self, events: &[SessionEvent]) -> io::Result<()> {
        for e in events {
            serde_json::to_writer(&mut self.out, e)?;
            self.out.write_all(b"\n")?;
        }
        self.out.flush()
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Reads a newline-delimited log, checking that `seq` is gap-free.
pub fn read_log<R: BufRead>(input: R) -> Result<Vec<SessionEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event: SessionEvent =
            serde_json::from_str(&line).map_err(|source| LogError::Parse { line: i + 1, source })?;
        let expected = events.len() as u64;
        if event.seq != expected {
            return Err(LogError::Gap {
                line: i + 1,
                expected,
                found: event.seq,
            });
        }
        events.push(event);
    }
    Ok(events)
}
