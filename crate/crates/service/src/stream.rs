//! Server-sent event stream of a session's log.
//!
//! Each message carries the `seq` of its last event as the SSE id. Runs of
//! expansion events are grouped into `expansions` messages holding a JSON
//! array; every other event is sent alone under its own kind. A client that
//! reconnects with `Last-Event-ID` (or `?from=` one past it) resumes without
//! gaps or duplicates.

use std::convert::Infallible;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::HeaderMap;
use axum::response::sse::{Event, KeepAlive, Sse};
use futures::Stream;
use guided_mha::SessionEvent;
use serde::Deserialize;
use tokio::sync::watch;

use crate::api::{lookup, ApiError};
use crate::store::{SessionHandle, Status, Store};

#[derive(Debug, Deserialize)]
pub struct From {
    from: Option<u64>,
}

struct Tail {
    handle: Arc<SessionHandle>,
    next: usize,
    head: watch::Receiver<usize>,
    batch: usize,
}

impl Tail {
    fn message(&mut self) -> Event {
        let events = self.handle.events_from(self.next, self.batch);
        let run = events.iter().take_while(|e| e.kind() == "expansion").count();
        let (event, taken): (Event, &[SessionEvent]) = if run > 0 {
            let taken = &events[..run];
            let data = serde_json::to_string(taken).expect("events serialize");
            (Event::default().event("expansions").data(data), taken)
        } else {
            let e = &events[0];
            (Event::default().event(e.kind()).data(e.to_json()), &events[..1])
        };
        self.next += taken.len();
        event.id(taken.last().unwrap().seq.to_string())
    }

    /// Sessions that solved or exhausted never produce more events; a
    /// declined one may be reopened.
    fn closed(&self) -> bool {
        matches!(self.handle.summary().status, Status::Solved | Status::Exhausted)
    }
}

fn last_event_id(headers: &HeaderMap) -> Option<u64> {
    headers.get("last-event-id")?.to_str().ok()?.trim().parse().ok()
}

pub async fn events(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    Query(query): Query<From>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    let handle = lookup(&store, &id)?;
    let next = query.from.or_else(|| last_event_id(&headers).map(|id| id + 1)).unwrap_or(0) as usize;
    let tail = Tail {
        head: handle.subscribe(),
        handle,
        next,
        batch: store.config.stream_batch.max(1),
    };
    let stream = futures::stream::unfold(tail, |mut t| async move {
        loop {
            let head = *t.head.borrow_and_update();
            if t.next < head {
                let message = t.message();
                return Some((Ok(message), t));
            }
            if t.closed() || t.head.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::default()))
}
