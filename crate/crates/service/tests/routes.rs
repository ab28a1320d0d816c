use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;
use usagegraph_core::{Graph, InteractionEvent};
use usagegraph_service::{router, AppState, ServiceConfig};

fn uav_state() -> AppState {
    let mut graph = Graph::new();
    for (ts, u, i) in [(1, "U", "A"), (2, "V", "A"), (3, "V", "B")] {
        graph.upsert_interaction(&InteractionEvent::new(ts, u, i, "view")).unwrap();
    }
    AppState::new(ServiceConfig::default(), graph).unwrap()
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, String) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn parse(body: &str) -> Value {
    serde_json::from_str(body).unwrap()
}

#[tokio::test]
async fn events_are_accepted_and_counted() {
    let state = AppState::new(ServiceConfig::default(), Graph::new()).unwrap();
    let app = router(state.clone());
    let (status, body) = call(&app, "POST", "/events", Some(r#"{"ts":1,"user":"u","item":"i","verb":"view"}"#)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(parse(&body), json!({"accepted": 1, "rejected": 0}));

    let batch = r#"[{"ts":2,"user":"u","item":"j","verb":"view"},{"ts":3,"user":"v","item":"j","verb":"view"},{"ts":-1,"user":"","item":"j","verb":"view"}]"#;
    let (status, body) = call(&app, "POST", "/events", Some(batch)).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(parse(&body), json!({"accepted": 2, "rejected": 1}));
    assert_eq!(state.pipeline().graph().read().edge_count(), 0, "not visible before workers run");

    let (status, _) = call(&app, "POST", "/events", Some("not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&app, "POST", "/events", Some("42")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    state.set_backend_down(true);
    let (status, _) = call(&app, "POST", "/events", Some(r#"{"ts":1,"user":"u","item":"i","verb":"view"}"#)).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    state.set_backend_down(false);

    state.pipeline().drain().unwrap();
    let (_, body) = call(&app, "GET", "/stats", None).await;
    let stats = parse(&body);
    assert_eq!(stats["events"], 3);
    assert_eq!(stats["graph"]["edges"], 3);
}

#[tokio::test]
async fn fresh_stats_are_zero() {
    let app = router(AppState::new(ServiceConfig::default(), Graph::new()).unwrap());
    let (status, body) = call(&app, "GET", "/stats", None).await;
    assert_eq!(status, StatusCode::OK);
    let stats = parse(&body);
    for key in ["events", "traversals", "cache_hits", "cache_misses", "rerank_calls"] {
        assert_eq!(stats[key], 0, "{key}");
    }
    assert_eq!(stats["queue_depths"]["events"], 0);
    assert_eq!(stats["click_positions"], json!({}));
}

#[tokio::test]
async fn recommendations_cache_and_live() {
    let state = uav_state();
    let app = router(state.clone());
    let (status, body) = call(&app, "GET", "/users/U/recommendations", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(parse(&body)["error"], "not cached");

    state.pipeline().schedule_rebuild("U").unwrap();
    state.pipeline().drain().unwrap();
    let (status, body) = call(&app, "GET", "/users/U/recommendations?mode=cache", None).await;
    assert_eq!(status, StatusCode::OK);
    let list = parse(&body);
    assert_eq!(list["items"][0]["item_id"], "A");
    assert_eq!(list["items"][1]["item_id"], "B");
    assert!((list["items"][0]["raw_score"].as_f64().unwrap() - 2.463).abs() < 1e-3);

    let (_, limited) = call(&app, "GET", "/users/U/recommendations?limit=1", None).await;
    assert_eq!(parse(&limited)["items"].as_array().unwrap().len(), 1);

    let (status, body) = call(&app, "GET", "/users/ghost/recommendations?mode=live", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body)["items"], json!([]));

    let (_, shallow) = call(&app, "GET", "/users/U/recommendations?depth=1", None).await;
    assert_eq!(parse(&shallow)["items"].as_array().unwrap().len(), 1);

    let (_, a) = call(&app, "GET", "/users/U/recommendations?as_of=2&mode=live", None).await;
    let (_, b) = call(&app, "GET", "/users/U/recommendations?as_of=2&mode=live", None).await;
    assert_eq!(a, b);
    assert_eq!(parse(&a)["generated_at"], 2);
}

#[tokio::test]
async fn recommendation_parameters_are_validated() {
    let app = router(uav_state());
    for uri in [
        "/users/U/recommendations?depth=9",
        "/users/U/recommendations?depth=0",
        "/users/U/recommendations?weighting=cubic",
        "/users/U/recommendations?max_usages=0",
        "/users/U/recommendations?as_of=yesterday",
        "/users/U/recommendations?mode=eventually",
    ] {
        let (status, body) = call(&app, "GET", uri, None).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{uri}");
        assert!(parse(&body)["error"].is_string());
    }
}

#[tokio::test]
async fn rerank_paths() {
    let state = uav_state();
    let app = router(state.clone());
    let (status, body) = call(&app, "POST", "/rerank", Some(r#"{"user":"U","items":["x","B","y"],"alpha":0}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let out = parse(&body);
    assert_eq!(out["items"], json!(["x", "B", "y"]));
    assert!(out.get("degraded").is_none());

    // cache miss falls back to a live traversal
    let (_, body) = call(&app, "POST", "/rerank", Some(r#"{"user":"U","items":["x","y","B"],"alpha":1}"#)).await;
    assert_eq!(parse(&body)["items"], json!(["B", "x", "y"]));

    let (_, body) = call(&app, "POST", "/rerank", Some(r#"{"user":"ghost","items":["x","y","B"],"alpha":1}"#)).await;
    assert_eq!(parse(&body)["items"], json!(["x", "y", "B"]));

    state.set_scoring_fault(true);
    let (status, body) = call(&app, "POST", "/rerank", Some(r#"{"user":"U","items":["x","y","B"],"alpha":1}"#)).await;
    assert_eq!(status, StatusCode::OK);
    let out = parse(&body);
    assert_eq!(out["items"], json!(["x", "y", "B"]));
    assert_eq!(out["degraded"], true);
    state.set_scoring_fault(false);

    let (status, body) = call(&app, "POST", "/admin/personalization", Some(r#"{"enabled":false}"#)).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(parse(&body)["enabled"], false);
    let (_, body) = call(&app, "POST", "/rerank", Some(r#"{"user":"U","items":["x","y","B"],"alpha":1}"#)).await;
    let out = parse(&body);
    assert_eq!(out["items"], json!(["x", "y", "B"]));
    assert_eq!(out["disabled"], true);
    assert!(out.get("degraded").is_none());

    for bad in [
        r#"{"user":"U","items":[],"alpha":0.5}"#,
        r#"{"user":"U","items":["a"],"alpha":1.5}"#,
        r#"{"user":"U","items":["a","a"],"alpha":0.5}"#,
        r#"{"user":"U","items":["a"],"alpha":0.5,"params":{"depth":12}}"#,
        "[]",
    ] {
        let (status, _) = call(&app, "POST", "/rerank", Some(bad)).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{bad}");
    }
    let (_, body) = call(&app, "GET", "/stats", None).await;
    assert_eq!(parse(&body)["rerank_calls"], 5);
}

#[tokio::test]
async fn search_log_positions_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("search.ndjson");
    let config = ServiceConfig {
        stats_log_path: Some(log.clone()),
        ..ServiceConfig::default()
    };
    let app = router(AppState::new(config.clone(), Graph::new()).unwrap());
    let shown: Vec<String> = (0..20).map(|i| format!("d{i}")).collect();
    let entry = |clicked: &str| {
        json!({"ts": 5, "user": "u", "query": "higgs", "shown": shown, "clicked": clicked, "method": "M"}).to_string()
    };
    let (status, body) = call(&app, "POST", "/search-log", Some(&entry("d0"))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    assert_eq!(parse(&body)["click_position"], 1);
    let (_, body) = call(&app, "POST", "/search-log", Some(&entry("d2"))).await;
    assert_eq!(parse(&body)["click_position"], 3);
    let (_, body) = call(&app, "POST", "/search-log", Some(&entry("d11"))).await;
    assert_eq!(parse(&body)["click_position"], 12);
    let (status, _) = call(&app, "POST", "/search-log", Some(&entry("zz"))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, body) = call(&app, "GET", "/stats", None).await;
    let m = &parse(&body)["click_positions"]["M"];
    assert_eq!(m["count"], 3);
    assert!((m["mean_click_position"].as_f64().unwrap() - 16.0 / 3.0).abs() < 1e-12);
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 3);

    // counts survive a restart through the log
    let app = router(AppState::new(config, Graph::new()).unwrap());
    let (_, body) = call(&app, "GET", "/stats", None).await;
    assert_eq!(parse(&body)["click_positions"]["M"]["count"], 3);
}

#[tokio::test]
async fn graph_export() {
    let app = router(AppState::new(ServiceConfig::default(), Graph::new()).unwrap());
    let (_, body) = call(&app, "GET", "/graph/export", None).await;
    assert_eq!(parse(&body), json!({"nodes": [], "links": []}));

    let mut graph = Graph::new();
    graph.upsert_interaction(&InteractionEvent::new(1, "u", "a", "view")).unwrap();
    graph.upsert_interaction(&InteractionEvent::new(2, "u", "b", "view")).unwrap();
    let app = router(AppState::new(ServiceConfig::default(), graph).unwrap());
    let (_, body) = call(&app, "GET", "/graph/export", None).await;
    let doc = parse(&body);
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 3);
    assert_eq!(doc["links"].as_array().unwrap().len(), 2);
    let (_, body) = call(&app, "GET", "/graph/export?limit_nodes=1", None).await;
    let doc = parse(&body);
    assert_eq!(doc["nodes"].as_array().unwrap().len(), 1);
    assert_eq!(doc["links"], json!([]));
    let (status, _) = call(&app, "GET", "/graph/export?limit_nodes=-3", None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn service_with_workers_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let events = dir.path().join("events.ndjson");
    std::fs::write(
        &events,
        "{\"ts\":1,\"user\":\"U\",\"item\":\"A\",\"verb\":\"view\"}\n\
         {\"ts\":2,\"user\":\"V\",\"item\":\"A\",\"verb\":\"view\"}\n\
         not json\n\
         {\"ts\":3,\"user\":\"V\",\"item\":\"B\",\"verb\":\"view\"}\n",
    )
    .unwrap();
    let config = ServiceConfig {
        snapshot_path: Some(dir.path().join("graph.snap")),
        pipeline: usagegraph_service::PipelineSection {
            backend: usagegraph_service::BackendKind::File,
            data_dir: Some(dir.path().join("data")),
            ..Default::default()
        },
        ..ServiceConfig::default()
    };
    let service = usagegraph_service::Service::start(config.clone()).unwrap();
    let report = service.import_ndjson(&events).unwrap();
    assert_eq!((report.imported, report.rejected), (3, 1));
    assert!(service.state().pipeline().wait_quiescent(Duration::from_secs(10)).unwrap());
    let app = service.router();
    let (_, body) = call(&app, "GET", "/stats", None).await;
    assert_eq!(parse(&body)["events"], 3);
    let (status, _) = call(&app, "GET", "/users/V/recommendations", None).await;
    assert_eq!(status, StatusCode::OK);
    tokio::task::spawn_blocking(move || service.shutdown().unwrap()).await.unwrap();

    // the snapshot and the file cache both come back
    let service = usagegraph_service::Service::start(config).unwrap();
    assert_eq!(service.state().pipeline().graph().read().edge_count(), 3);
    let (status, _) = call(&service.router(), "GET", "/users/U/recommendations", None).await;
    assert_eq!(status, StatusCode::OK);
    tokio::task::spawn_blocking(move || service.shutdown().unwrap()).await.unwrap();
}
