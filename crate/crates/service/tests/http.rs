use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use gmha_service::{router, ServiceConfig, Store};
use guided_mha::events::read_log;
use guided_mha::scenario::u_trap_guidance;
use guided_mha::{replay, GridCell, GridMap, SessionEvent};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app_with(config: ServiceConfig) -> (Router, Arc<Store>) {
    let store = Arc::new(Store::open(config).unwrap());
    (router(store.clone()), store)
}

fn app() -> Router {
    app_with(ServiceConfig::default()).0
}

fn request(method: &str, uri: &str, body: Option<Value>) -> Request<Body> {
    let body = body.map_or(Body::empty(), |v| Body::from(v.to_string()));
    Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body)
        .unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let response = app.clone().oneshot(request(method, uri, body)).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn create(app: &Router, body: Value) -> u64 {
    let (status, v) = call(app, "POST", "/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["id"].as_u64().unwrap()
}

async fn advance(app: &Router, id: u64, max: u64) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/advance"), Some(json!({ "max_expansions": max }))).await
}

async fn parked_u_trap(app: &Router) -> u64 {
    let id = create(app, json!({ "builtin": "u_trap" })).await;
    let (status, v) = advance(app, id, 10_000).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "awaiting_guidance");
    id
}

/// A cell of the trap's base, straight east of the start.
fn trap_wall() -> [f64; 2] {
    let map = GridMap::u_trap();
    let start = map.start();
    let x = (start.x..map.width())
        .find(|&x| map.is_blocked(GridCell::new(x, start.y)))
        .unwrap();
    [x as f64, start.y as f64]
}

#[derive(Debug)]
struct Message {
    event: String,
    id: u64,
    data: Value,
}

fn parse_sse(text: &str) -> Vec<Message> {
    text.split("\n\n")
        .filter_map(|block| {
            let mut event = None;
            let mut id = None;
            let mut data = String::new();
            for line in block.lines() {
                if let Some(v) = line.strip_prefix("event:") {
                    event = Some(v.trim().to_string());
                } else if let Some(v) = line.strip_prefix("id:") {
                    id = Some(v.trim().parse().unwrap());
                } else if let Some(v) = line.strip_prefix("data:") {
                    data.push_str(v.trim_start());
                }
            }
            Some(Message {
                event: event?,
                id: id?,
                data: serde_json::from_str(&data).unwrap(),
            })
        })
        .collect()
}

fn flatten(messages: &[Message]) -> Vec<SessionEvent> {
    let mut out = Vec::new();
    for m in messages {
        match &m.data {
            Value::Array(items) => {
                assert_eq!(m.event, "expansions");
                out.extend(items.iter().map(|v| serde_json::from_value::<SessionEvent>(v.clone()).unwrap()));
            }
            v => out.push(serde_json::from_value(v.clone()).unwrap()),
        }
        assert_eq!(out.last().unwrap().seq, m.id);
    }
    out
}

async fn stream_to_end(app: &Router, uri: &str) -> Vec<Message> {
    let response = app.clone().oneshot(request("GET", uri, None)).await.unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    parse_sse(std::str::from_utf8(&bytes).unwrap())
}

#[tokio::test]
async fn health_probe() {
    let (status, v) = call(&app(), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn empty_map_solves_in_one_advance() {
    let app = app();
    let id = create(&app, json!({ "builtin": "empty" })).await;
    let (status, v) = advance(&app, id, 10_000).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "solved");
    assert!(v["cost"].as_f64().unwrap() > 0.0);
    let (_, shown) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(shown, v);
    let (status, _) = advance(&app, id, 1).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn creation_errors_are_bad_requests() {
    let app = app();
    let blocked = json!({ "scenario": { "domain": { "kind": "grid", "map": "S#T", "start": [1, 0] } } });
    let (status, v) = call(&app, "POST", "/sessions", Some(blocked)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("(1, 0)"), "{v}");

    let detector = json!({ "map": "S.T", "config": { "detector_kind": "tarot" } });
    let (status, v) = call(&app, "POST", "/sessions", Some(detector)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(v["error"].as_str().unwrap().contains("tarot"), "{v}");

    let (status, _) = call(&app, "POST", "/sessions", Some(json!({ "map": "S.T", "config": { "w1": 0.5 } }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let response = app.clone().oneshot(request("POST", "/sessions", None).map(|_| Body::from("{nope"))).await.unwrap();
    assert_eq!(response.status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_sessions_are_not_found() {
    let app = app();
    for (method, uri) in [
        ("GET", "/sessions/9"),
        ("POST", "/sessions/9/advance"),
        ("POST", "/sessions/abc/advance"),
        ("GET", "/sessions/9/events"),
    ] {
        let (status, _) = call(&app, method, uri, None).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {uri}");
    }
}

#[tokio::test]
async fn u_trap_parks_and_guidance_resumes_it() {
    let app = app();
    let id = parked_u_trap(&app).await;
    let (_, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let request = &summary["pending_request"];
    assert_eq!(request["queue"], 1);
    assert!(request["min_h_state"]["configuration"].is_array());

    let (status, _) = advance(&app, id, 10).await;
    assert_eq!(status, StatusCode::CONFLICT);

    let uri = format!("/sessions/{id}/guidance");
    let (status, v) = call(&app, "POST", &uri, Some(json!({ "configuration": trap_wall() }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["submission"]["result"], "rejected", "{v}");
    assert_eq!(v["session"]["status"], "awaiting_guidance");

    let (_, v) = call(&app, "POST", &format!("/sessions/{id}/snap"), Some(json!({ "configuration": u_trap_guidance() }))).await;
    assert_eq!(v["valid"], true);

    let (_, v) = call(&app, "POST", &uri, Some(json!({ "configuration": u_trap_guidance() }))).await;
    assert_eq!(v["submission"]["result"], "accepted");
    assert_eq!(v["session"]["status"], "running");
    let (_, v) = advance(&app, id, 10_000).await;
    assert_eq!(v["status"], "solved");
    assert_eq!(v["totals"]["guidances_used"], 1);

    let (status, _) = call(&app, "POST", &uri, Some(json!({ "decline": true }))).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn decline_terminates_and_reopen_asks_again() {
    let app = app();
    let id = parked_u_trap(&app).await;
    let (_, v) = call(&app, "POST", &format!("/sessions/{id}/guidance"), Some(json!({ "decline": true }))).await;
    assert_eq!(v["submission"]["result"], "declined");
    assert_eq!(v["session"]["status"], "declined");
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/guidance"), Some(json!({}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, v) = call(&app, "POST", &format!("/sessions/{id}/reopen"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "awaiting_guidance");
    let (status, _) = call(&app, "POST", &format!("/sessions/{id}/reopen"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn busy_session_rejects_a_second_writer() {
    let (app, store) = app_with(ServiceConfig::default());
    let id = create(&app, json!({ "builtin": "empty" })).await;
    let held = store.get(id).unwrap().try_writer().unwrap();
    let (status, _) = advance(&app, id, 10).await;
    assert_eq!(status, StatusCode::CONFLICT);
    // readers are not blocked by the writer
    let (status, _) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    drop(held);
    let (status, _) = advance(&app, id, 10).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn concurrent_advances_never_interleave() {
    let (app, _) = app_with(ServiceConfig::default());
    let id = create(&app, json!({ "builtin": "u_trap", "settings": { "guidance": false } })).await;
    let calls = (0..8).map(|_| {
        let app = app.clone();
        tokio::spawn(async move { advance(&app, id, 300).await.0 })
    });
    let mut ok = 0;
    for c in calls {
        match c.await.unwrap() {
            StatusCode::OK => ok += 1,
            s => assert_eq!(s, StatusCode::CONFLICT),
        }
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(v["expansions"].as_u64().unwrap(), 300 * ok);
}

#[tokio::test]
async fn stream_replays_the_full_log_in_batches() {
    let app = app();
    let id = parked_u_trap(&app).await;
    call(&app, "POST", &format!("/sessions/{id}/guidance"), Some(json!({ "configuration": u_trap_guidance() }))).await;
    let (_, summary) = advance(&app, id, 10_000).await;
    assert_eq!(summary["status"], "solved");

    let messages = stream_to_end(&app, &format!("/sessions/{id}/events?from=0")).await;
    let events = flatten(&messages);
    assert_eq!(events.len() as u64, summary["events"].as_u64().unwrap());
    assert!(events.iter().enumerate().all(|(i, e)| e.seq == i as u64));
    assert_eq!(replay(&events).unwrap(), events);
    for m in &messages {
        if let Value::Array(items) = &m.data {
            assert!(items.len() <= 50);
        }
    }
    assert!(messages.iter().any(|m| m.event == "guidance_added"));
    assert_eq!(messages.last().unwrap().event, "terminated");

    // resuming one past a message boundary loses and repeats nothing
    let cut = messages[messages.len() / 2].id;
    let rest = flatten(&stream_to_end(&app, &format!("/sessions/{id}/events?from={}", cut + 1)).await);
    assert_eq!(rest, events[cut as usize + 1..]);
    let response = app
        .clone()
        .oneshot(
            Request::builder()
                .uri(format!("/sessions/{id}/events"))
                .header("last-event-id", cut.to_string())
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(flatten(&parse_sse(std::str::from_utf8(&bytes).unwrap())), rest);
}

#[tokio::test]
async fn stream_past_head_waits_for_new_events() {
    let app = app();
    let id = parked_u_trap(&app).await;
    let (_, summary) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let head = summary["events"].as_u64().unwrap();
    let response = app
        .clone()
        .oneshot(request("GET", &format!("/sessions/{id}/events?from={head}"), None))
        .await
        .unwrap();
    let mut body = response.into_body();
    let quiet = tokio::time::timeout(Duration::from_millis(200), body.frame()).await;
    assert!(quiet.is_err(), "no event expected before guidance");

    call(&app, "POST", &format!("/sessions/{id}/guidance"), Some(json!({ "configuration": u_trap_guidance() }))).await;
    let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
        .await
        .unwrap()
        .unwrap()
        .unwrap();
    let text = String::from_utf8(frame.into_data().unwrap().to_vec()).unwrap();
    let messages = parse_sse(&text);
    assert_eq!(messages[0].event, "guidance_added");
    assert_eq!(messages[0].id, head);
}

#[tokio::test]
async fn sessions_survive_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let config = ServiceConfig {
        log_dir: Some(dir.path().to_path_buf()),
        ..ServiceConfig::default()
    };
    let (app, store) = app_with(config.clone());
    let id = parked_u_trap(&app).await;
    let before = call(&app, "GET", &format!("/sessions/{id}"), None).await.1;
    drop(app);
    drop(store);

    // a crash mid-write leaves a torn final line
    let path = dir.path().join(format!("{id}.ndjson"));
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"seq\":99999,\"kind\":\"expa");
    std::fs::write(&path, text).unwrap();

    let (app, _) = app_with(config.clone());
    let after = call(&app, "GET", &format!("/sessions/{id}"), None).await.1;
    assert_eq!(after, before);
    let next = create(&app, json!({ "builtin": "empty" })).await;
    assert!(next > id);

    call(&app, "POST", &format!("/sessions/{id}/guidance"), Some(json!({ "configuration": u_trap_guidance() }))).await;
    let (_, v) = advance(&app, id, 10_000).await;
    assert_eq!(v["status"], "solved");

    let log = read_log(std::io::BufReader::new(std::fs::File::open(&path).unwrap())).unwrap();
    assert_eq!(log.len() as u64, v["events"].as_u64().unwrap());
    assert_eq!(replay(&log).unwrap(), log);
}
