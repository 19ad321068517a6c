use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use guided_mha::scenario::override_config;
use guided_mha::{GuidanceAnswer, Phase, PlannerConfig, Scenario, Session, SessionSettings, Submission};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::store::{SessionHandle, Store, Writer};

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    BadRequest(String),
    #[error("no session {0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            Self::BadRequest(_) => StatusCode::BAD_REQUEST,
            Self::NotFound(_) => StatusCode::NOT_FOUND,
            Self::Conflict(_) => StatusCode::CONFLICT,
            Self::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(json!({ "error": self.to_string() }))).into_response()
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::Internal(e.to_string())
}

fn parse_body<T: DeserializeOwned + Default>(body: &[u8]) -> Result<T, ApiError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| ApiError::BadRequest(format!("request body: {e}")))
}

pub(crate) fn lookup(store: &Store, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
    id.parse()
        .ok()
        .and_then(|id| store.get(id))
        .ok_or_else(|| ApiError::NotFound(id.to_string()))
}

fn writer(handle: &SessionHandle) -> Result<tokio::sync::OwnedMutexGuard<Writer>, ApiError> {
    handle
        .try_writer()
        .ok_or_else(|| ApiError::Conflict("another request is driving this session".into()))
}

pub async fn health(State(store): State<Arc<Store>>) -> Json<Value> {
    Json(json!({ "status": "ok", "sessions": store.len() }))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    scenario: Option<Value>,
    builtin: Option<String>,
    map: Option<String>,
    #[serde(default)]
    config: Map<String, Value>,
    settings: Option<SessionSettings>,
}

fn build_scenario(req: &CreateSession, defaults: &PlannerConfig) -> Result<Scenario, ApiError> {
    let bad = |e: String| ApiError::BadRequest(e);
    let (mut scenario, base) = match (&req.scenario, &req.builtin, &req.map) {
        (Some(doc), None, None) => {
            let s = Scenario::from_value_with_defaults(doc.clone(), defaults).map_err(|e| bad(e.to_string()))?;
            let base = s.config.clone();
            (s, base)
        }
        (None, Some(name), None) => {
            let s = Scenario::builtin(name)
                .ok_or_else(|| bad(format!("unknown builtin {name:?}, expected one of {:?}", Scenario::BUILTIN)))?;
            let base = s.config.clone();
            (s, base)
        }
        (None, None, Some(map)) => (Scenario::from_map_text(map), defaults.clone()),
        _ => return Err(bad("give exactly one of scenario, builtin or map".into())),
    };
    scenario.config = override_config(&base, &req.config).map_err(|e| bad(format!("config: {e}")))?;
    Ok(scenario)
}

pub async fn create(State(store): State<Arc<Store>>, body: Bytes) -> Result<(StatusCode, Json<Value>), ApiError> {
    let req: CreateSession = parse_body(&body)?;
    let scenario = build_scenario(&req, &store.config.planner)?;
    let settings = req.settings.clone().unwrap_or_default();
    let session = Session::from_scenario(&scenario, settings).map_err(|e| ApiError::BadRequest(e.to_string()))?;
    let handle = store.insert(session).map_err(internal)?;
    Ok((StatusCode::CREATED, Json(json!(handle.summary()))))
}

pub async fn list(State(store): State<Arc<Store>>) -> Json<Value> {
    Json(json!(store.list()))
}

pub async fn show(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    Ok(Json(json!(lookup(&store, &id)?.summary())))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Advance {
    max_expansions: Option<u64>,
}

fn ensure_running(phase: Phase) -> Result<(), ApiError> {
    match phase {
        Phase::AwaitingGuidance => Err(ApiError::Conflict("session is awaiting guidance".into())),
        Phase::Finished(outcome) => Err(ApiError::Conflict(format!(
            "session has terminated ({})",
            serde_json::to_value(outcome).map_err(internal)?.as_str().unwrap_or("?")
        ))),
        Phase::Searching | Phase::Guided => Ok(()),
    }
}

pub async fn advance(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: Advance = parse_body(&body)?;
    let handle = lookup(&store, &id)?;
    let mut guard = writer(&handle)?;
    ensure_running(guard.session.phase())?;
    let max = req.max_expansions.unwrap_or(store.config.default_advance);
    let batch = store.config.stream_batch.max(1);
    let worker = handle.clone();
    tokio::task::spawn_blocking(move || drive(&worker, &mut guard, max, batch))
        .await
        .map_err(internal)??;
    Ok(Json(json!(handle.summary())))
}

/// Steps until `max` expansions are spent, the session parks, or it ends.
/// Events are published at every controller transition and at least every
/// `batch` steps so that streams keep up with long advances.
fn drive(handle: &SessionHandle, w: &mut Writer, max: u64, batch: usize) -> Result<(), ApiError> {
    let start = w.session.planner().expansions();
    let mut pending = 0;
    while matches!(w.session.phase(), Phase::Searching | Phase::Guided) && w.session.planner().expansions() - start < max {
        let transition = w
            .session
            .step()
            .map_err(internal)?
            .iter()
            .any(|e| e.kind() != "expansion");
        pending += 1;
        if transition || pending >= batch {
            handle.publish(w).map_err(internal)?;
            pending = 0;
        }
    }
    handle.publish(w).map_err(internal)
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GuidanceBody {
    configuration: Option<Vec<f64>>,
    #[serde(default)]
    decline: bool,
}

pub async fn guidance(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: GuidanceBody = parse_body(&body)?;
    let answer = match (req.configuration, req.decline) {
        (Some(c), false) => GuidanceAnswer::Configuration(c),
        (None, true) => GuidanceAnswer::Decline,
        _ => return Err(ApiError::BadRequest("give either a configuration or decline: true".into())),
    };
    let handle = lookup(&store, &id)?;
    let mut guard = writer(&handle)?;
    if guard.session.phase() != Phase::AwaitingGuidance {
        return Err(ApiError::Conflict("session is not awaiting guidance".into()));
    }
    let submission = guard.session.submit(answer).map_err(internal)?;
    handle.publish(&mut guard).map_err(internal)?;
    let result = match submission {
        Submission::Accepted { queue } => json!({ "result": "accepted", "queue": queue }),
        Submission::Rejected { reason } => json!({ "result": "rejected", "reason": reason }),
        Submission::Declined => json!({ "result": "declined" }),
    };
    Ok(Json(json!({ "submission": result, "session": handle.summary() })))
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapBody {
    configuration: Vec<f64>,
}

/// Validity check without submitting, for previews.
pub async fn snap(
    State(store): State<Arc<Store>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let req: SnapBody = parse_body(&body)?;
    let handle = lookup(&store, &id)?;
    let guard = writer(&handle)?;
    Ok(Json(match guard.session.planner().snap(&req.configuration) {
        Ok(g) => json!({
            "valid": true,
            "state": g.snapped,
            "snapped": g.snapped_configuration,
            "distance": g.distance,
        }),
        Err(e) => json!({ "valid": false, "reason": e.to_string() }),
    }))
}

pub async fn reopen(State(store): State<Arc<Store>>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let handle = lookup(&store, &id)?;
    let mut guard = writer(&handle)?;
    guard
        .session
        .reopen()
        .map_err(|e| ApiError::Conflict(e.to_string()))?;
    handle.publish(&mut guard).map_err(internal)?;
    Ok(Json(json!(handle.summary())))
}
