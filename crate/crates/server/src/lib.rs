//! HTTP service reranking a candidate pool against a seed paper with the
//! Background and Method models.
//!
//! * `POST /rerank`: raw, normalized and fused scores per candidate and the
//!   three rankings.
//! * `GET /health`: readiness and the manifests of the loaded models.
//!
//! Models are immutable after startup. Scoring runs on the blocking pool;
//! at most `queue_capacity` requests are scored at once and the rest are
//! turned away with 429.

pub mod fusion;

use std::collections::{BTreeMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use facetrank_core::benchmark::PairScorer;
use facetrank_core::corpus::{self, Paper, PaperIndex};
use facetrank_core::encoder::checkpoint::{self, CheckpointError, CheckpointManifest};
use facetrank_core::{Facet, FacetModel};
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

pub use self::fusion::{fuse, min_max, CandidateScores, Rankings};

pub const DEFAULT_MAX_CANDIDATES: usize = 100;
pub const DEFAULT_QUEUE_CAPACITY: usize = 4;
const SEED_ID: &str = "seed";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub max_candidates: usize,
    /// Requests scored concurrently before new ones get 429.
    pub queue_capacity: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            max_candidates: DEFAULT_MAX_CANDIDATES,
            queue_capacity: DEFAULT_QUEUE_CAPACITY,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error("{path}: {source}")]
    Checkpoint {
        path: PathBuf,
        #[source]
        source: CheckpointError,
    },
    #[error("checkpoint {path} holds a {found} model, expected {expected}")]
    WrongFacet { path: PathBuf, expected: Facet, found: Facet },
    #[error(transparent)]
    Corpus(#[from] corpus::CorpusError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A model with the manifest it was loaded from, if any.
#[derive(Debug, Clone)]
pub struct LoadedModel {
    pub model: FacetModel,
    pub manifest: Option<CheckpointManifest>,
}

impl LoadedModel {
    pub fn load(dir: &Path, facet: Facet) -> Result<Self, ServerError> {
        let (model, manifest) = checkpoint::load(dir).map_err(|source| ServerError::Checkpoint {
            path: dir.to_path_buf(),
            source,
        })?;
        if model.facet() != facet {
            return Err(ServerError::WrongFacet {
                path: dir.to_path_buf(),
                expected: facet,
                found: model.facet(),
            });
        }
        Ok(Self {
            model,
            manifest: Some(manifest),
        })
    }

    /// First 16 hex digits of the parameter hash.
    pub fn checkpoint_id(&self) -> String {
        let full = match &self.manifest {
            Some(m) => m.parameters_sha256.clone(),
            None => {
                let bytes: Vec<u8> = self.model.params().iter().flat_map(|v| v.to_le_bytes()).collect();
                facetrank_core::io::sha256_hex(&bytes)
            }
        };
        full[..16].to_string()
    }

    fn info(&self) -> ModelInfo {
        ModelInfo {
            facet: self.model.facet(),
            backbone_profile: self.model.profile().as_str().to_string(),
            checkpoint_id: self.checkpoint_id(),
            validation_metric: self.manifest.as_ref().and_then(|m| m.validation_metric),
            validation_history: self.manifest.as_ref().map(|m| m.validation_history.clone()).unwrap_or_default(),
        }
    }
}

/// Shared, read-only service state.
pub struct AppState {
    background: Option<LoadedModel>,
    method: Option<LoadedModel>,
    corpus: Option<PaperIndex>,
    config: ServerConfig,
    queue: Arc<Semaphore>,
    next_request: AtomicU64,
}

impl AppState {
    pub fn new(background: Option<LoadedModel>, method: Option<LoadedModel>, config: ServerConfig) -> Self {
        let queue = Arc::new(Semaphore::new(config.queue_capacity));
        Self {
            background,
            method,
            corpus: None,
            config,
            queue,
            next_request: AtomicU64::new(1),
        }
    }

    /// Loads whichever checkpoints exist; a missing model only degrades
    /// readiness. Unreadable checkpoints are errors.
    pub fn from_checkpoints(bg_dir: Option<&Path>, mt_dir: Option<&Path>, config: ServerConfig) -> Result<Self, ServerError> {
        let load = |dir: Option<&Path>, facet| match dir {
            Some(d) if d.exists() => LoadedModel::load(d, facet).map(Some),
            Some(d) => {
                tracing::warn!(path = %d.display(), %facet, "checkpoint not found; facet unavailable");
                Ok(None)
            }
            None => Ok(None),
        };
        Ok(Self::new(
            load(bg_dir, Facet::Background)?,
            load(mt_dir, Facet::Method)?,
            config,
        ))
    }

    /// Enables filling in candidate texts by id from `papers.jsonl`.
    pub fn with_corpus(mut self, papers_jsonl: &Path) -> Result<Self, ServerError> {
        let papers = corpus::ingest_jsonl(papers_jsonl)?.papers;
        self.corpus = Some(corpus::index_papers(&papers));
        Ok(self)
    }

    pub fn config(&self) -> &ServerConfig {
        &self.config
    }

    /// Scoring semaphore; exposed so callers can observe back-pressure.
    pub fn queue(&self) -> &Arc<Semaphore> {
        &self.queue
    }

    fn missing(&self) -> Vec<Facet> {
        [(Facet::Background, &self.background), (Facet::Method, &self.method)]
            .into_iter()
            .filter(|(_, m)| m.is_none())
            .map(|(f, _)| f)
            .collect()
    }

    fn health(&self) -> Health {
        let missing = self.missing();
        Health {
            ready: missing.is_empty(),
            missing,
            models: [&self.background, &self.method].into_iter().flatten().map(LoadedModel::info).collect(),
            max_candidates: self.config.max_candidates,
            corpus_lookup: self.corpus.is_some(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedText {
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateText {
    pub candidate_id: String,
    /// May be omitted when corpus lookup is enabled.
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankRequest {
    pub seed: SeedText,
    pub candidates: Vec<CandidateText>,
    /// Background weight in the fused score.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResponse {
    pub alpha: f64,
    pub candidates: Vec<CandidateScores>,
    pub rankings: Rankings,
    /// Facet → checkpoint id.
    pub models: BTreeMap<Facet, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub facet: Facet,
    pub backbone_profile: String,
    pub checkpoint_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub ready: bool,
    pub missing: Vec<Facet>,
    pub models: Vec<ModelInfo>,
    pub max_candidates: usize,
    pub corpus_lookup: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// Request failure with its HTTP status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody { error: self.message })).into_response()
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/rerank", post(rerank))
        .route("/health", get(health))
        .with_state(state)
}

/// Binds `addr` and serves until ctrl-c.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(state.health())
}

/// Checks the request and resolves candidate texts into papers.
fn validate(state: &AppState, req: &RerankRequest) -> Result<(Paper, Vec<Paper>), ApiError> {
    if req.candidates.len() > state.config.max_candidates {
        return Err(ApiError::new(
            StatusCode::PAYLOAD_TOO_LARGE,
            format!("{} candidates exceed the limit of {}", req.candidates.len(), state.config.max_candidates),
        ));
    }
    if req.candidates.is_empty() {
        return Err(ApiError::bad_request("candidates must not be empty"));
    }
    if !(0.0..=1.0).contains(&req.alpha) {
        return Err(ApiError::bad_request(format!("alpha must be in [0, 1], got {}", req.alpha)));
    }
    if req.seed.title.trim().is_empty() || req.seed.abstract_text.trim().is_empty() {
        return Err(ApiError::bad_request("seed needs a title and an abstract"));
    }
    let mut seen = HashSet::new();
    let mut papers = Vec::with_capacity(req.candidates.len());
    for c in &req.candidates {
        if c.candidate_id.trim().is_empty() {
            return Err(ApiError::bad_request("candidate_id must not be empty"));
        }
        if !seen.insert(c.candidate_id.as_str()) {
            return Err(ApiError::bad_request(format!("duplicate candidate_id `{}`", c.candidate_id)));
        }
        let stored = state.corpus.as_ref().and_then(|idx| idx.get(&c.candidate_id));
        let title = c.title.clone().or_else(|| stored.map(|p| p.title.clone()));
        let abstract_text = c.abstract_text.clone().or_else(|| stored.map(|p| p.abstract_text.clone()));
        match (title, abstract_text) {
            (Some(t), Some(a)) if !t.trim().is_empty() && !a.trim().is_empty() => {
                papers.push(Paper::new(c.candidate_id.clone(), t, a));
            }
            _ => {
                return Err(ApiError::bad_request(format!(
                    "candidate `{}` needs a title and an abstract",
                    c.candidate_id
                )))
            }
        }
    }
    let seed = Paper::new(SEED_ID, req.seed.title.clone(), req.seed.abstract_text.clone());
    Ok((seed, papers))
}

fn score_pool(state: &AppState, seed: &Paper, candidates: &[Paper], alpha: f64) -> Result<RerankResponse, ApiError> {
    let (Some(bg), Some(mt)) = (&state.background, &state.method) else {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "models are not loaded"));
    };
    let refs: Vec<&Paper> = candidates.iter().collect();
    let score = |m: &LoadedModel| {
        m.model
            .score_pool(seed, &refs)
            .map_err(|e| ApiError::bad_request(format!("{} model: {e}", m.model.facet())))
    };
    let bg_scores = score(bg)?;
    let mt_scores = score(mt)?;
    let ids: Vec<String> = candidates.iter().map(|c| c.paper_id.clone()).collect();
    let (rows, rankings) = fuse(&ids, &bg_scores, &mt_scores, alpha)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(RerankResponse {
        alpha,
        candidates: rows,
        rankings,
        models: BTreeMap::from([
            (Facet::Background, bg.checkpoint_id()),
            (Facet::Method, mt.checkpoint_id()),
        ]),
    })
}

async fn rerank(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Json<RerankResponse>, ApiError> {
    let request_id = state.next_request.fetch_add(1, Ordering::Relaxed);
    let start = Instant::now();
    let result = rerank_inner(&state, &body).await;
    let status = result.as_ref().map_or_else(|e| e.status, |_| StatusCode::OK);
    let pool_size = result.as_ref().map_or(0, |r| r.candidates.len());
    tracing::info!(
        request_id,
        pool_size,
        status = status.as_u16(),
        latency_ms = start.elapsed().as_secs_f64() * 1e3,
        "rerank"
    );
    result.map(Json)
}

async fn rerank_inner(state: &Arc<AppState>, body: &[u8]) -> Result<RerankResponse, ApiError> {
    let req: RerankRequest =
        serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))?;
    let (seed, candidates) = validate(state, &req)?;
    if !state.missing().is_empty() {
        return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "models are not loaded"));
    }
    let permit = state
        .queue
        .clone()
        .try_acquire_owned()
        .map_err(|_| ApiError::new(StatusCode::TOO_MANY_REQUESTS, "scoring queue is full; retry later"))?;
    let state = Arc::clone(state);
    tokio::task::spawn_blocking(move || {
        let _permit = permit;
        score_pool(&state, &seed, &candidates, req.alpha)
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("scoring task failed: {e}")))?
}
