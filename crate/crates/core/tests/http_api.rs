use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use axum::Router;
use groundqa::fixtures;
use groundqa::llm::RetryPolicy;
use groundqa::pipeline::{CannedText, SessionManager};
use groundqa::service::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(token: Option<&str>) -> AppState {
    let mut engine = fixtures::engine();
    engine.retry = RetryPolicy::no_delay();
    AppState::new(Arc::new(SessionManager::in_memory(Arc::new(engine)))).with_admin_token(token.map(String::from))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>, auth: Option<&str>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(token) = auth {
        req = req.header("authorization", format!("Bearer {token}"));
    }
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    let value = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, value)
}

async fn new_session(app: &Router, body: Option<Value>) -> String {
    let (status, v) = call(app, "POST", "/v1/sessions", body, None).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

#[tokio::test]
async fn healthz_reports_corpus_and_provider() {
    let app = router(state(None));
    let (status, v) = call(&app, "GET", "/healthz", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["status"], "ok");
    assert_eq!(v["provider"], "mock");
    assert!(v["corpus_version"].is_u64());
}

#[tokio::test]
async fn conversation_round_trip() {
    let app = router(state(None));
    let id = new_session(&app, None).await;

    let (status, turn) = call(&app, "POST", &format!("/v1/sessions/{id}/messages"), Some(json!({"text": "Hello"})), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(turn["kind"], "informal");
    assert_eq!(turn["turn_index"], 0);

    let (status, turn) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/messages"),
        Some(json!({"text": "Where is the spare wheel stored?"})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(turn["turn_index"], 1);
    assert_eq!(turn["class"], "info_seeking");
    assert_eq!(turn["moderator"], "extraction_score");
    assert!(matches!(turn["kind"].as_str(), Some("extractive" | "generative")));
    assert_eq!(turn["retrieved"].as_array().unwrap().len(), 3);
    assert!(turn["scores"]["extractive"].is_f64());
    assert!(!turn["final_text"].as_str().unwrap().is_empty());

    let (status, session) = call(&app, "GET", &format!("/v1/sessions/{id}"), None, None).await;
    assert_eq!(status, StatusCode::OK);
    let turns = session["turns"].as_array().unwrap();
    assert_eq!(turns.len(), 2);
    assert_eq!(turns[1]["user_utterance"], "Where is the spare wheel stored?");
    assert_eq!(turns[1]["final_text"], turn["final_text"]);
}

#[tokio::test]
async fn bad_requests_are_rejected() {
    let app = router(state(None));
    let (status, v) = call(&app, "POST", "/v1/sessions", Some(json!({"config": {"retriever": "telepathy"}})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(v["error"].is_string());
    let (status, _) = call(&app, "POST", "/v1/sessions", Some(json!({"config": {"threshold": 2.0}})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", "/v1/sessions", Some(json!({"config": {"provider": "nowhere"}})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let (status, _) = call(&app, "POST", "/v1/sessions/nope/messages", Some(json!({"text": "hi"})), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/v1/sessions/nope", None, None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let id = new_session(&app, None).await;
    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/messages"), Some(json!({"text": "   "})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/messages"), Some(json!({"txt": "x"})), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn search_endpoint() {
    let app = router(state(None));
    let (status, v) = call(&app, "GET", "/v1/search?q=spare%20wheel&k=2&mode=hybrid_rrf", None, None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["mode"], "hybrid_rrf");
    let results = v["results"].as_array().unwrap();
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["rank"], 1);
    assert!(results[0]["text"].as_str().unwrap().to_lowercase().contains("spare"));

    for uri in ["/v1/search?q=x&k=0", "/v1/search?q=x&k=51", "/v1/search?q=x&mode=psychic"] {
        let (status, _) = call(&app, "GET", uri, None, None).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{uri}");
    }
}

#[tokio::test]
async fn ingest_requires_token_and_swaps_corpus() {
    let doc = json!({"name": "bulletin", "content": "The hovercraft mode lifts the car above flooded roads.\n\nHold the hover key for five seconds."});

    let app = router(state(None));
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(doc.clone()), Some("secret")).await;
    assert_eq!(status, StatusCode::FORBIDDEN);

    let app = router(state(Some("secret")));
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(doc.clone()), None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let (status, _) = call(&app, "POST", "/v1/ingest", Some(doc.clone()), Some("wrong")).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);

    let (_, before) = call(&app, "GET", "/healthz", None, None).await;
    let (status, v) = call(&app, "POST", "/v1/ingest", Some(doc.clone()), Some("secret")).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert!(v["paragraphs_added"].as_u64().unwrap() >= 1);
    assert_eq!(v["corpus_version"], before["corpus_version"].as_u64().unwrap() + 1);

    let (_, hits) = call(&app, "GET", "/v1/search?q=hovercraft&k=1", None, None).await;
    assert!(hits["results"][0]["paragraph_id"].as_str().unwrap().starts_with("bulletin"));

    let (status, _) = call(&app, "POST", "/v1/ingest", Some(doc), Some("secret")).await;
    assert_eq!(status, StatusCode::CONFLICT);
}

#[tokio::test]
async fn filtered_turn_hides_candidate_text() {
    let app = router(state(None));
    let config = json!({"config": {"label": "strict", "threshold": 1.0, "input_class_source": "utterance"}});
    let id = new_session(&app, Some(config)).await;
    let (status, turn) = call(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/messages"),
        Some(json!({"text": "How do I top up engine oil?"})),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(turn["kind"], "filtered");
    assert_eq!(turn["filtered"], true);
    assert_eq!(turn["final_text"], CannedText::default().filtered);
    let raw = turn.to_string();
    assert!(!raw.contains("Pour in any oil"));
    assert!(turn.get("candidates").is_none());
}
