//! Session registry, the per-session writer and log persistence.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use guided_mha::events::EventWriter;
use guided_mha::{restore, GuidanceRequest, Outcome, Phase, Session, SessionEvent, Totals};
use serde::Serialize;
use tokio::sync::{watch, Mutex, OwnedMutexGuard};

use crate::ServiceConfig;

pub type SessionId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    AwaitingGuidance,
    Solved,
    Exhausted,
    Declined,
}

impl From<Phase> for Status {
    fn from(phase: Phase) -> Self {
        match phase {
            Phase::Searching | Phase::Guided => Self::Running,
            Phase::AwaitingGuidance => Self::AwaitingGuidance,
            Phase::Finished(Outcome::Solved) => Self::Solved,
            Phase::Finished(Outcome::BudgetExhausted | Outcome::SpaceExhausted) => Self::Exhausted,
            Phase::Finished(Outcome::Declined) => Self::Declined,
        }
    }
}

/// What `GET /sessions/{id}` reports. Refreshed by the writer, so readers
/// never wait on a running advance.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub id: SessionId,
    pub name: Option<String>,
    pub status: Status,
    pub expansions: u64,
    pub events: usize,
    pub totals: Totals,
    pub pending_request: Option<GuidanceRequest>,
    pub cost: Option<f64>,
    pub path: Option<Vec<Vec<f64>>>,
}

/// The mutable half of a session. Only the holder of the lock may step it.
pub struct Writer {
    pub session: Session,
    log: Option<EventWriter<BufWriter<File>>>,
    synced: usize,
}

pub struct SessionHandle {
    pub id: SessionId,
    name: Option<String>,
    writer: Arc<Mutex<Writer>>,
    events: RwLock<Vec<SessionEvent>>,
    summary: RwLock<Summary>,
    head: watch::Sender<usize>,
}

impl SessionHandle {
    fn new(id: SessionId, session: Session, log: Option<EventWriter<BufWriter<File>>>) -> Self {
        let name = match &session.events()[0].body {
            guided_mha::EventBody::SessionCreated { scenario, .. } => scenario.as_ref().and_then(|s| s.name.clone()),
            _ => None,
        };
        let events = session.events().to_vec();
        let synced = events.len();
        let summary = summarize(id, name.clone(), &session);
        let (head, _) = watch::channel(synced);
        Self {
            id,
            name,
            writer: Arc::new(Mutex::new(Writer { session, log, synced })),
            events: RwLock::new(events),
            summary: RwLock::new(summary),
            head,
        }
    }

    /// Takes the writer without waiting; `None` while another request holds it.
    pub fn try_writer(&self) -> Option<OwnedMutexGuard<Writer>> {
        self.writer.clone().try_lock_owned().ok()
    }

    /// Publishes events the writer has produced since the last call: they
    /// are appended to the log file (flushed), to the in-memory copy read by
    /// streams, and announced to subscribers.
    pub fn publish(&self, writer: &mut Writer) -> io::Result<()> {
        let fresh = &writer.session.events()[writer.synced..];
        if fresh.is_empty() {
            return Ok(());
        }
        if let Some(log) = writer.log.as_mut() {
            log.write_all(fresh)?;
        }
        let len = {
            let mut events = self.events.write().unwrap();
            events.extend_from_slice(fresh);
            events.len()
        };
        writer.synced = len;
        *self.summary.write().unwrap() = summarize(self.id, self.name.clone(), &writer.session);
        self.head.send_replace(len);
        Ok(())
    }

    pub fn summary(&self) -> Summary {
        self.summary.read().unwrap().clone()
    }

    pub fn len(&self) -> usize {
        self.events.read().unwrap().len()
    }

    /// Events `from..`, at most `limit` of them.
    pub fn events_from(&self, from: usize, limit: usize) -> Vec<SessionEvent> {
        let events = self.events.read().unwrap();
        events.iter().skip(from).take(limit).cloned().collect()
    }

    pub fn subscribe(&self) -> watch::Receiver<usize> {
        self.head.subscribe()
    }
}

fn summarize(id: SessionId, name: Option<String>, session: &Session) -> Summary {
    let solution = session.is_finished().then(|| session.planner().solution()).flatten();
    let domain = &session.planner().problem().domain;
    Summary {
        id,
        name,
        status: session.phase().into(),
        expansions: session.planner().expansions(),
        events: session.events().len(),
        totals: session.totals(),
        pending_request: session.pending_request().cloned(),
        cost: solution.as_ref().map(|s| s.cost),
        path: solution.map(|s| s.path.iter().map(|id| domain.configuration(*id)).collect()),
    }
}

pub struct Store {
    sessions: RwLock<BTreeMap<SessionId, Arc<SessionHandle>>>,
    next_id: AtomicU64,
    pub config: ServiceConfig,
}

impl Store {
    /// Opens the store, restoring every session whose log lies in the log
    /// directory. Logs that fail to re-execute are skipped with a warning.
    pub fn open(config: ServiceConfig) -> io::Result<Self> {
        let mut sessions = BTreeMap::new();
        if let Some(dir) = &config.log_dir {
            fs::create_dir_all(dir)?;
            for entry in fs::read_dir(dir)? {
                let path = entry?.path();
                let Some(id) = log_id(&path) else { continue };
                match load(&path) {
                    Ok(handle) => {
                        sessions.insert(id, Arc::new(SessionHandle::new(id, handle.0, Some(handle.1))));
                    }
                    Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
                }
            }
        }
        let next = sessions.keys().next_back().map_or(1, |id| id + 1);
        Ok(Self {
            sessions: RwLock::new(sessions),
            next_id: AtomicU64::new(next),
            config,
        })
    }

    pub fn insert(&self, session: Session) -> io::Result<Arc<SessionHandle>> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let log = match &self.config.log_dir {
            Some(dir) => {
                let file = OpenOptions::new().create_new(true).write(true).open(log_path(dir, id))?;
                let mut log = EventWriter::new(BufWriter::new(file));
                log.write_all(session.events())?;
                Some(log)
            }
            None => None,
        };
        let handle = Arc::new(SessionHandle::new(id, session, log));
        self.sessions.write().unwrap().insert(id, handle.clone());
        Ok(handle)
    }

    pub fn get(&self, id: SessionId) -> Option<Arc<SessionHandle>> {
        self.sessions.read().unwrap().get(&id).cloned()
    }

    pub fn list(&self) -> Vec<Summary> {
        self.sessions.read().unwrap().values().map(|h| h.summary()).collect()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn log_path(dir: &Path, id: SessionId) -> PathBuf {
    dir.join(format!("{id}.ndjson"))
}

fn log_id(path: &Path) -> Option<SessionId> {
    if path.extension()? != "ndjson" {
        return None;
    }
    path.file_stem()?.to_str()?.parse().ok()
}

/// Reads a log, dropping a torn final line left by a crash, and rebuilds the
/// session. The file is rewritten when a torn line was dropped so that later
/// appends stay well formed.
fn load(path: &Path) -> Result<(Session, EventWriter<BufWriter<File>>), String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let mut events = Vec::with_capacity(lines.len());
    let mut torn = false;
    for (i, line) in lines.iter().enumerate() {
        match serde_json::from_str::<SessionEvent>(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() && !text.ends_with('\n') => torn = true,
            Err(e) => return Err(format!("line {}: {e}", i + 1)),
        }
    }
    let session = restore(&events).map_err(|e| e.to_string())?;
    let file = if torn {
        let mut out = EventWriter::new(BufWriter::new(File::create(path).map_err(|e| e.to_string())?));
        out.write_all(&events).map_err(|e| e.to_string())?;
        out
    } else {
        let file = OpenOptions::new().append(true).open(path).map_err(|e| e.to_string())?;
        EventWriter::new(BufWriter::new(file))
    };
    Ok((session, file))
}
