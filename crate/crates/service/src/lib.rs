//! HTTP front end for guided planning sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/health` | liveness probe |
//! | POST | `/sessions` | create from `scenario`, `builtin` or `map`, plus `config` overrides |
//! | GET | `/sessions` | summaries of all sessions |
//! | GET | `/sessions/{id}` | summary |
//! | POST | `/sessions/{id}/advance` | `{"max_expansions": n}` |
//! | POST | `/sessions/{id}/guidance` | `{"configuration": [..]}` or `{"decline": true}` |
//! | POST | `/sessions/{id}/snap` | validity preview of a configuration |
//! | POST | `/sessions/{id}/reopen` | ask again after a decline |
//! | GET | `/sessions/{id}/events?from=seq` | server-sent events |
//!
//! Sessions are single-writer: a second advance or guidance submission while
//! one is in flight gets 409 instead of waiting.

mod api;
pub mod store;
mod stream;

use std::path::PathBuf;
use std::sync::Arc;

use axum::routing::{get, post};
use axum::Router;
use guided_mha::PlannerConfig;
use serde::{Deserialize, Serialize};
use tokio::net::TcpListener;

pub use api::ApiError;
pub use store::{SessionHandle, Status, Store, Summary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Where session logs are written and restored from. `None` keeps
    /// sessions in memory only.
    pub log_dir: Option<PathBuf>,
    /// Consecutive expansion events per stream message.
    pub stream_batch: usize,
    /// Expansions per advance when the request names none.
    pub default_advance: u64,
    /// Defaults for scenario documents and bare maps. Built-in scenarios
    /// keep their own configuration.
    pub planner: PlannerConfig,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            log_dir: None,
            stream_batch: 50,
            default_advance: 10_000,
            planner: PlannerConfig::default(),
        }
    }
}

pub fn router(store: Arc<Store>) -> Router {
    Router::new()
        .route("/health", get(api::health))
        .route("/sessions", post(api::create).get(api::list))
        .route("/sessions/{id}", get(api::show))
        .route("/sessions/{id}/advance", post(api::advance))
        .route("/sessions/{id}/guidance", post(api::guidance))
        .route("/sessions/{id}/snap", post(api::snap))
        .route("/sessions/{id}/reopen", post(api::reopen))
        .route("/sessions/{id}/events", get(stream::events))
        .with_state(store)
}

pub async fn serve(listener: TcpListener, store: Arc<Store>) -> std::io::Result<()> {
    axum::serve(listener, router(store)).await
}
