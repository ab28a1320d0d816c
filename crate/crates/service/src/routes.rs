use std::collections::BTreeMap;
use std::sync::atomic::Ordering;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::warn;
use usagegraph_core::eval::SearchLogEntry;
use usagegraph_core::export::node_link;
use usagegraph_core::pipeline::{EVENT_QUEUE, RECBUILD_QUEUE};
use usagegraph_core::rerank::{validate_alpha, BaseScoring, OriginalResult};
use usagegraph_core::{rerank, InteractionEvent, RecommendationList, RerankRequest, ScoredItem, ScoringParams, Weighting};

use crate::error::ApiError;
use crate::state::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/events", post(post_events))
        .route("/users/{id}/recommendations", get(get_recommendations))
        .route("/rerank", post(post_rerank))
        .route("/search-log", post(post_search_log))
        .route("/stats", get(get_stats))
        .route("/graph/export", get(get_export))
        .route("/admin/personalization", post(post_personalization))
        .with_state(state)
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid JSON body: {e}")))
}

fn json_body(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

async fn post_events(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let value: Value = parse_json(&body)?;
    let items = match value {
        Value::Array(items) => items,
        Value::Object(_) => vec![value],
        _ => return Err(ApiError::bad_request("expected an event object or an array of events")),
    };
    let (mut accepted, mut rejected) = (0u64, 0u64);
    for item in items {
        let Ok(event) = serde_json::from_value::<InteractionEvent>(item) else {
            rejected += 1;
            continue;
        };
        if event.validate().is_err() {
            rejected += 1;
            continue;
        }
        state.0.pipeline.enqueue_event(&event)?;
        accepted += 1;
    }
    Ok((StatusCode::ACCEPTED, Json(json!({ "accepted": accepted, "rejected": rejected }))).into_response())
}

#[derive(Debug, Default, Deserialize)]
struct RecommendationQuery {
    as_of: Option<String>,
    depth: Option<String>,
    max_usages: Option<String>,
    weighting: Option<String>,
    limit: Option<String>,
    mode: Option<String>,
}

fn parse_num<T: std::str::FromStr>(name: &str, raw: &Option<String>) -> Result<Option<T>, ApiError> {
    raw.as_deref()
        .map(|s| s.parse().map_err(|_| ApiError::bad_request(format!("{name}: not a valid number: {s:?}"))))
        .transpose()
}

impl RecommendationQuery {
    /// Effective parameters and whether any scoring override was given.
    fn params(&self, defaults: &ScoringParams) -> Result<(ScoringParams, bool), ApiError> {
        let mut params = defaults.clone();
        let mut overridden = false;
        if let Some(t) = parse_num("as_of", &self.as_of)? {
            params.as_of = Some(t);
            overridden = true;
        }
        if let Some(d) = parse_num("depth", &self.depth)? {
            params.depth = d;
            overridden = true;
        }
        if let Some(n) = parse_num("max_usages", &self.max_usages)? {
            params.max_usages = Some(n);
            overridden = true;
        }
        if let Some(w) = &self.weighting {
            params.weighting = w.parse::<Weighting>()?;
            overridden = true;
        }
        if let Some(limit) = parse_num("limit", &self.limit)? {
            params.max_results = Some(limit);
        }
        params.validate()?;
        Ok((params, overridden))
    }
}

async fn get_recommendations(
    State(state): State<AppState>,
    Path(user): Path<String>,
    Query(query): Query<RecommendationQuery>,
) -> Result<Response, ApiError> {
    let live = match query.mode.as_deref() {
        None | Some("cache") => false,
        Some("live") => true,
        Some(other) => return Err(ApiError::bad_request(format!("mode must be cache or live, got {other:?}"))),
    };
    let (params, overridden) = query.params(&state.0.config.scoring)?;
    let pipeline = state.0.pipeline.clone();

    if live || overridden {
        let list = tokio::task::spawn_blocking(move || pipeline.recommend_live(&user, &params))
            .await
            .map_err(|e| ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: format!("traversal failed: {e}"),
            })?;
        return Ok(Json(list).into_response());
    }

    let Some(raw) = pipeline.get_cached_raw(&user)? else {
        return Ok((
            StatusCode::NOT_FOUND,
            Json(json!({ "error": "not cached", "user": user })),
        )
            .into_response());
    };
    match query.limit {
        None => Ok(json_body(StatusCode::OK, raw.to_string())),
        Some(_) => {
            let mut list: RecommendationList = serde_json::from_str(&raw).map_err(|e| ApiError {
                status: StatusCode::INTERNAL_SERVER_ERROR,
                message: format!("corrupt cache entry: {e}"),
            })?;
            if let Some(limit) = params.max_results {
                list.items.truncate(limit);
            }
            Ok(Json(list).into_response())
        }
    }
}

#[derive(Debug, Deserialize)]
struct RerankBody {
    user: String,
    items: Vec<String>,
    alpha: Option<f64>,
    #[serde(default)]
    engine_scores: Option<Vec<f64>>,
    /// Scoring overrides; forces a live traversal.
    #[serde(default)]
    params: Option<ScoringParams>,
}

#[derive(Debug, Serialize)]
struct RerankResponse {
    items: Vec<String>,
    final_scores: Vec<f64>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    degraded: bool,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    disabled: bool,
}

enum RecSource {
    Found(Vec<ScoredItem>),
    Failed,
}

async fn fetch_recommendations(state: &AppState, user: &str, params: Option<ScoringParams>) -> RecSource {
    if state.0.scoring_fault.load(Ordering::SeqCst) {
        return RecSource::Failed;
    }
    let pipeline = state.0.pipeline.clone();
    if params.is_none() {
        match pipeline.get_cached_recommendations(user) {
            Ok(Some(list)) => return RecSource::Found(list.items),
            Ok(None) => {}
            Err(err) => warn!(%err, user, "cache lookup failed, computing live"),
        }
    }
    let params = params.unwrap_or_else(|| state.0.config.scoring.clone());
    let user = user.to_owned();
    match tokio::task::spawn_blocking(move || pipeline.recommend_live(&user, &params)).await {
        Ok(list) => RecSource::Found(list.items),
        Err(err) => {
            warn!(%err, "live traversal failed");
            RecSource::Failed
        }
    }
}

async fn post_rerank(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: RerankBody = parse_json(&body)?;
    let alpha = body.alpha.unwrap_or(state.0.config.default_alpha);
    validate_alpha(alpha)?;
    let original = OriginalResult {
        items: body.items,
        engine_scores: body.engine_scores,
    };
    original.validate()?;
    if let Some(params) = &body.params {
        params.validate()?;
    }
    state.0.rerank_calls.fetch_add(1, Ordering::Relaxed);

    let disabled = !state.personalization_enabled();
    let (recommendations, degraded) = if disabled {
        (Vec::new(), false)
    } else {
        match fetch_recommendations(&state, &body.user, body.params).await {
            RecSource::Found(items) => (items, false),
            RecSource::Failed => {
                state.0.degraded_responses.fetch_add(1, Ordering::Relaxed);
                (Vec::new(), true)
            }
        }
    };
    let request = RerankRequest {
        user_id: body.user,
        original,
        alpha: if disabled || degraded { 0.0 } else { alpha },
        recommendations,
        base: BaseScoring::Auto,
    };
    let result = rerank(&request)?;
    Ok(Json(RerankResponse {
        items: result.items,
        final_scores: result.final_scores,
        degraded,
        disabled,
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct SearchLogBody {
    ts: i64,
    user: String,
    query: String,
    shown: Vec<String>,
    clicked: String,
    method: String,
    #[serde(default)]
    alpha: Option<f64>,
}

async fn post_search_log(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: SearchLogBody = parse_json(&body)?;
    let entry = SearchLogEntry::new(body.ts, body.user, body.query, body.shown, body.clicked, body.method, body.alpha)?;
    state.record_click(&entry).map_err(|e| ApiError::unavailable(format!("stats log: {e}")))?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "click_position": entry.click_position }))).into_response())
}

#[derive(Debug, Serialize)]
struct MethodClicks {
    count: u64,
    mean_click_position: f64,
}

async fn get_stats(State(state): State<AppState>) -> Json<Value> {
    let inner = &state.0;
    let stats = inner.pipeline.stats();
    let load = |c: &std::sync::atomic::AtomicU64| c.load(Ordering::Relaxed);
    let depth = |q: &str| inner.pipeline.queue_depth(q).ok();
    let clicks: BTreeMap<String, MethodClicks> = inner
        .clicks
        .lock()
        .iter()
        .map(|(method, t)| {
            (
                method.clone(),
                MethodClicks {
                    count: t.count,
                    mean_click_position: t.position_sum as f64 / t.count as f64,
                },
            )
        })
        .collect();
    let (users, items, edges) = {
        let graph = inner.pipeline.graph().read();
        (graph.user_count(), graph.item_count(), graph.edge_count())
    };
    Json(json!({
        "events": load(&stats.events_applied),
        "events_enqueued": load(&stats.events_enqueued),
        "events_dropped": load(&stats.events_dropped),
        "insert_failures": load(&stats.insert_failures),
        "queue_depths": { "events": depth(EVENT_QUEUE), "recbuild": depth(RECBUILD_QUEUE) },
        "traversals": load(&stats.traversals),
        "traversal_failures": load(&stats.traversal_failures),
        "mean_traversal_ms": stats.mean_traversal_ms(),
        "cache_hits": load(&stats.cache_hits),
        "cache_misses": load(&stats.cache_misses),
        "rerank_calls": load(&inner.rerank_calls),
        "degraded_responses": load(&inner.degraded_responses),
        "click_positions": clicks,
        "graph": { "users": users, "items": items, "edges": edges },
        "personalization_enabled": state.personalization_enabled(),
    }))
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    limit_nodes: Option<String>,
}

async fn get_export(State(state): State<AppState>, Query(query): Query<ExportQuery>) -> Result<Response, ApiError> {
    let limit = parse_num::<usize>("limit_nodes", &query.limit_nodes)?;
    let doc = node_link(&state.0.pipeline.graph().read(), limit);
    Ok(Json(doc).into_response())
}

#[derive(Debug, Deserialize)]
struct PersonalizationBody {
    enabled: bool,
}

async fn post_personalization(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: PersonalizationBody = parse_json(&body)?;
    state.set_personalization(body.enabled);
    Ok(Json(json!({ "enabled": body.enabled })).into_response())
}
