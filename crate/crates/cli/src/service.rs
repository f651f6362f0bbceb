//! The control service: parse queries over HTTP and mutate the live index
//! without restarting.
//!
//! Reads run concurrently; index mutations are serialized and atomic, so a
//! parse request observes the index either entirely before or entirely after
//! a concurrent mutation.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use casper_core::augmentation::{build_augmented_query, AugmentationConfig};
use casper_core::dataset::DatasetRecord;
use casper_core::evaluation::GuidedPolicy;
use casper_core::generation::Generator;
use casper_core::retrieval::{top_k, RetrievalConfig, RetrievalError};
use casper_core::scenarios::{refactor_index, LabelMapping};
use casper_core::Index64;

pub struct ServiceState {
    pub index: RwLock<Index64>,
    pub generator: Generator,
    pub retrieval: RetrievalConfig,
    pub augmentation: AugmentationConfig,
    pub policy: GuidedPolicy,
}

struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl ToString) -> Self {
        Self {
            status,
            message: message.to_string(),
        }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = Json(serde_json::json!({ "error": self.message }));
        (self.status, body).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

#[derive(Debug, Deserialize)]
struct ParseRequest {
    query: String,
    #[serde(default)]
    guided: Option<bool>,
}

#[derive(Debug, Serialize)]
struct ParseResponse {
    mr: String,
    valid: bool,
    exemplar_ids: Vec<String>,
    guided: bool,
}

async fn parse_query(
    State(state): State<Arc<ServiceState>>,
    Json(request): Json<ParseRequest>,
) -> ApiResult<ParseResponse> {
    // Everything ranking-dependent happens under one read guard so a
    // concurrent swap cannot produce a mixed view.
    let (exemplars, guided) = {
        let index = state.index.read().unwrap();
        let pool = index
            .rank(&request.query, &state.retrieval)
            .map_err(rank_error)?;
        let exemplars = top_k(&pool, &state.retrieval).map_err(rank_error)?;
        let guided = request.guided.unwrap_or_else(|| state.policy.decide(&exemplars));
        (exemplars, guided)
    };
    let x_plus = build_augmented_query(&request.query, &exemplars.items, guided, &state.augmentation)
        .map_err(ApiError::bad_request)?;

    let blocking_state = Arc::clone(&state);
    let generated = tokio::task::spawn_blocking(move || {
        blocking_state
            .generator
            .generate(&x_plus, &blocking_state.augmentation)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?
    .map_err(|e| ApiError::new(StatusCode::SERVICE_UNAVAILABLE, e))?;

    Ok(Json(ParseResponse {
        mr: generated.output_text,
        valid: generated.valid,
        exemplar_ids: exemplars.ids(),
        guided,
    }))
}

fn rank_error(e: RetrievalError) -> ApiError {
    match e {
        RetrievalError::EmptyIndex
        | RetrievalError::EmptyAfterExclusion
        | RetrievalError::MissingEmbedding { .. } => ApiError::bad_request(e),
        other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, other),
    }
}

#[derive(Debug, Serialize)]
struct StatsResponse {
    entries: usize,
    dimension: usize,
    domains: BTreeMap<String, usize>,
}

async fn index_stats(State(state): State<Arc<ServiceState>>) -> Json<StatsResponse> {
    let index = state.index.read().unwrap();
    Json(StatsResponse {
        entries: index.len(),
        dimension: index.dimension(),
        domains: index.domain_counts(),
    })
}

#[derive(Debug, Serialize)]
struct AddedResponse {
    added: usize,
}

async fn add_entries(
    State(state): State<Arc<ServiceState>>,
    body: String,
) -> ApiResult<AddedResponse> {
    let mut examples = Vec::new();
    for (idx, line) in body.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord = serde_json::from_str(line)
            .map_err(|e| ApiError::bad_request(format!("line {}: {e}", idx + 1)))?;
        examples.push(
            record
                .parse()
                .map_err(|e| ApiError::bad_request(format!("line {}: {e}", idx + 1)))?,
        );
    }
    let mut index = state.index.write().unwrap();
    let added = index.add_entries(&examples).map_err(|e| match e {
        RetrievalError::DuplicateId { .. } => ApiError::new(StatusCode::CONFLICT, e),
        other => ApiError::bad_request(other),
    })?;
    Ok(Json(AddedResponse { added }))
}

#[derive(Debug, Deserialize)]
struct RemoveRequest {
    #[serde(default)]
    ids: Option<Vec<String>>,
    #[serde(default)]
    domain: Option<String>,
}

#[derive(Debug, Serialize)]
struct RemovedResponse {
    removed: usize,
}

async fn remove_entries(
    State(state): State<Arc<ServiceState>>,
    Json(request): Json<RemoveRequest>,
) -> ApiResult<RemovedResponse> {
    let mut index = state.index.write().unwrap();
    let removed = match (request.ids, request.domain) {
        (Some(ids), None) => {
            // Unknown ids fail the whole request; nothing is removed.
            if let Some(missing) = ids.iter().find(|id| !index.contains_id(id)) {
                return Err(ApiError::new(
                    StatusCode::NOT_FOUND,
                    format!("unknown id {missing:?}"),
                ));
            }
            index.remove_by_ids(&ids)
        }
        (None, Some(domain)) => index.remove_by_domain(&domain),
        _ => {
            return Err(ApiError::bad_request(
                "body must contain exactly one of \"ids\" or \"domain\"",
            ))
        }
    };
    Ok(Json(RemovedResponse { removed }))
}

#[derive(Debug, Serialize)]
struct RefactorResponse {
    entries_changed: usize,
    labels_replaced: usize,
}

async fn refactor(
    State(state): State<Arc<ServiceState>>,
    body: String,
) -> ApiResult<RefactorResponse> {
    let mapping = LabelMapping::parse_tsv(&body).map_err(ApiError::bad_request)?;
    let mut index = state.index.write().unwrap();
    let stats = refactor_index(&mut index, &mapping);
    Ok(Json(RefactorResponse {
        entries_changed: stats.entries_changed,
        labels_replaced: stats.labels_replaced,
    }))
}

#[derive(Debug, Deserialize)]
struct SwapRequest {
    snapshot_path: PathBuf,
}

#[derive(Debug, Serialize)]
struct EntriesResponse {
    entries: usize,
}

async fn swap(
    State(state): State<Arc<ServiceState>>,
    Json(request): Json<SwapRequest>,
) -> ApiResult<EntriesResponse> {
    let replacement =
        Index64::load_snapshot(&request.snapshot_path).map_err(ApiError::bad_request)?;
    let mut index = state.index.write().unwrap();
    *index = replacement;
    Ok(Json(EntriesResponse {
        entries: index.len(),
    }))
}

#[derive(Debug, Deserialize)]
struct SnapshotRequest {
    path: PathBuf,
}

async fn snapshot(
    State(state): State<Arc<ServiceState>>,
    Json(request): Json<SnapshotRequest>,
) -> ApiResult<EntriesResponse> {
    let index = state.index.read().unwrap();
    index
        .save_snapshot(&request.path)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
    Ok(Json(EntriesResponse {
        entries: index.len(),
    }))
}

async fn healthz() -> &'static str {
    "ok"
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/v1/parse", post(parse_query))
        .route("/v1/index/stats", get(index_stats))
        .route(
            "/v1/index/entries",
            post(add_entries).delete(remove_entries),
        )
        .route("/v1/index/refactor", post(refactor))
        .route("/v1/index/swap", put(swap))
        .route("/v1/index/snapshot", post(snapshot))
        .route("/healthz", get(healthz))
        .with_state(state)
}

/// Bind and serve until the process exits. Returns the bound address via
/// `on_bound` (useful with port 0).
pub async fn serve(
    state: Arc<ServiceState>,
    addr: &str,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
