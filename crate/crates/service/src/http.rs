use std::collections::BTreeMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use feedmatch::metrics::{Averaging, RelevanceAnnotation};
use serde::de::DeserializeOwned;
use tower_http::services::ServeDir;

use crate::error::ApiError;
use crate::log::TriageDecision;
use crate::service::{
    AnnotationRequest, CorpusSummary, DecisionRequest, InverseRequest, InverseResponse, MatchRequest, MatchResponse,
    MetricsResponse, Service, UnmatchedResponse,
};

type Shared = State<Arc<Service>>;
type Params = Query<BTreeMap<String, String>>;

pub fn router(service: Arc<Service>) -> Router {
    let ui = service.config().ui_dir.clone();
    let router = Router::new()
        .route("/corpora", post(post_corpora).get(get_corpora))
        .route("/match", post(post_match))
        .route("/match/inverse", post(post_inverse))
        .route("/annotations", post(post_annotation).get(get_annotations))
        .route("/decisions", post(post_decision).get(get_decisions))
        .route("/metrics", get(get_metrics))
        .route("/unmatched", get(get_unmatched))
        .with_state(service);
    match ui {
        Some(dir) => router.fallback_service(ServeDir::new(dir)),
        None => router,
    }
}

fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

fn param<T: std::str::FromStr>(params: &BTreeMap<String, String>, name: &str) -> Result<Option<T>, ApiError>
where
    T::Err: std::fmt::Display,
{
    params
        .get(name)
        .map(|v| {
            v.parse()
                .map_err(|e| ApiError::bad_request(format!("query parameter {name}: {e}")))
        })
        .transpose()
}

async fn blocking<T, F>(f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, ApiError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn post_corpora(
    State(s): Shared,
    Query(params): Params,
    body: Bytes,
) -> Result<(StatusCode, Json<CorpusSummary>), ApiError> {
    let app = params.get("app").cloned();
    let summary = blocking(move || s.load_corpus(&body, app)).await?;
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_corpora(State(s): Shared) -> Result<Json<CorpusSummary>, ApiError> {
    s.corpus_summary().map(Json)
}

async fn post_match(State(s): Shared, body: Bytes) -> Result<Json<MatchResponse>, ApiError> {
    let req: MatchRequest = parse(&body)?;
    blocking(move || s.match_query(&req)).await.map(Json)
}

async fn post_inverse(State(s): Shared, body: Bytes) -> Result<Json<InverseResponse>, ApiError> {
    let req: InverseRequest = parse(&body)?;
    blocking(move || s.inverse(&req)).await.map(Json)
}

async fn post_annotation(State(s): Shared, body: Bytes) -> Result<(StatusCode, Json<RelevanceAnnotation>), ApiError> {
    let req: AnnotationRequest = parse(&body)?;
    let stored = blocking(move || s.annotate(&req)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn get_annotations(State(s): Shared) -> Json<Vec<RelevanceAnnotation>> {
    Json(s.annotations())
}

async fn post_decision(State(s): Shared, body: Bytes) -> Result<(StatusCode, Json<TriageDecision>), ApiError> {
    let req: DecisionRequest = parse(&body)?;
    let stored = blocking(move || s.decide(&req)).await?;
    Ok((StatusCode::CREATED, Json(stored)))
}

async fn get_decisions(State(s): Shared) -> Json<Vec<TriageDecision>> {
    Json(s.decisions())
}

async fn get_metrics(State(s): Shared, Query(params): Params) -> Result<Json<MetricsResponse>, ApiError> {
    let k = param::<usize>(&params, "k")?;
    let excluded: Vec<String> = params
        .get("exclude")
        .map(|v| {
            v.split(',')
                .map(str::trim)
                .filter(|x| !x.is_empty())
                .map(String::from)
                .collect()
        })
        .unwrap_or_default();
    let averaging = match params.get("averaging").map(String::as_str) {
        None | Some("macro") => Averaging::Macro,
        Some("micro") => Averaging::Micro,
        Some(other) => return Err(ApiError::bad_request(format!("unknown averaging {other:?}"))),
    };
    blocking(move || s.metrics(k, &excluded, averaging)).await.map(Json)
}

async fn get_unmatched(State(s): Shared, Query(params): Params) -> Result<Json<UnmatchedResponse>, ApiError> {
    let threshold = param::<f64>(&params, "threshold")?;
    blocking(move || s.unmatched(threshold)).await.map(Json)
}
