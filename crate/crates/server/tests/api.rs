use std::sync::Arc;

use axum::body::{to_bytes, Body};
use axum::http::{Request, StatusCode};
use facetrank_core::encoder::checkpoint::{self, CreationMetadata};
use facetrank_core::encoder::{HeadInit, Tokenizer};
use facetrank_core::synthetic::vocabulary_texts;
use facetrank_core::{Facet, FacetModel};
use facetrank_server::{router, AppState, Health, LoadedModel, RerankResponse, ServerConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

fn model(facet: Facet, seed: u64) -> LoadedModel {
    let texts = vocabulary_texts();
    let tok = Arc::new(Tokenizer::build_word(texts.iter().map(String::as_str), 1, 1000));
    let model = FacetModel::compact(facet, tok, 64, seed, HeadInit::SmallUniform(0.5)).unwrap();
    LoadedModel { model, manifest: None }
}

fn state(bg: Option<u64>, mt: Option<u64>, cfg: ServerConfig) -> Arc<AppState> {
    Arc::new(AppState::new(
        bg.map(|s| model(Facet::Background, s)),
        mt.map(|s| model(Facet::Method, s)),
        cfg,
    ))
}

fn ready() -> Arc<AppState> {
    state(Some(1), Some(2), ServerConfig::default())
}

fn request(n: usize, alpha: f64) -> Value {
    let topics = ["protein", "galaxy", "traffic", "speech", "climate"];
    let methods = ["kernel", "bayesian", "wavelet", "clustering", "genetic"];
    json!({
        "seed": {"title": "protein via kernel", "abstract": "we address protein with a kernel approach"},
        "candidates": (0..n).map(|i| json!({
            "candidate_id": format!("c{i:03}"),
            "title": format!("{} with {}", topics[i % 5], methods[(i / 5) % 5]),
            "abstract": format!("a {} model for {} is proposed", methods[(i / 5) % 5], topics[i % 5]),
        })).collect::<Vec<_>>(),
        "alpha": alpha,
    })
}

async fn call(state: Arc<AppState>, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn rerank(state: Arc<AppState>, body: Value) -> RerankResponse {
    let (status, v) = call(state, "POST", "/rerank", Some(body)).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    serde_json::from_value(v).unwrap()
}

#[tokio::test]
async fn extreme_alpha_matches_single_facet_rankings() {
    let r1 = rerank(ready(), request(12, 1.0)).await;
    assert_eq!(r1.rankings.fused, r1.rankings.bg);
    let r0 = rerank(ready(), request(12, 0.0)).await;
    assert_eq!(r0.rankings.fused, r0.rankings.mt);
    assert_eq!(r1.candidates.len(), 12);
    assert!(r1.models.contains_key(&Facet::Background) && r1.models.contains_key(&Facet::Method));
}

#[tokio::test]
async fn response_is_self_consistent_and_deterministic() {
    let a = rerank(ready(), request(10, 0.3)).await;
    let b = rerank(ready(), request(10, 0.3)).await;
    assert_eq!(a, b);
    for c in &a.candidates {
        assert!((0.0..=1.0).contains(&c.bg_norm) && (0.0..=1.0).contains(&c.mt_norm));
        assert!((c.fused - (0.3 * c.bg_norm + 0.7 * c.mt_norm)).abs() < 1e-12);
    }
    let scores: Vec<(String, f64)> = a.candidates.iter().map(|c| (c.candidate_id.clone(), c.bg_score)).collect();
    assert_eq!(facetrank_core::metrics::rank_candidates(&scores).unwrap(), a.rankings.bg);
}

#[tokio::test]
async fn bg_scores_ignore_the_method_model() {
    let a = rerank(state(Some(1), Some(2), ServerConfig::default()), request(8, 0.5)).await;
    let b = rerank(state(Some(1), Some(99), ServerConfig::default()), request(8, 0.5)).await;
    let bg = |r: &RerankResponse| r.candidates.iter().map(|c| c.bg_score).collect::<Vec<_>>();
    let mt = |r: &RerankResponse| r.candidates.iter().map(|c| c.mt_score).collect::<Vec<_>>();
    assert_eq!(bg(&a), bg(&b));
    assert_ne!(mt(&a), mt(&b));
}

#[tokio::test]
async fn invalid_requests_get_400() {
    let cases = [
        json!({"seed": 1}),
        request(3, 1.5),
        request(0, 0.5),
        {
            let mut r = request(2, 0.5);
            r["candidates"][1]["candidate_id"] = json!("c000");
            r
        },
        {
            let mut r = request(2, 0.5);
            r["candidates"][0]["abstract"] = json!("  ");
            r
        },
    ];
    for body in cases {
        let (status, v) = call(ready(), "POST", "/rerank", Some(body.clone())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{body} -> {v}");
        assert!(v["error"].is_string());
    }
    let req = Request::builder().method("POST").uri("/rerank").body(Body::from("not json")).unwrap();
    assert_eq!(router(ready()).oneshot(req).await.unwrap().status(), StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn oversized_pools_get_413() {
    let (status, _) = call(ready(), "POST", "/rerank", Some(request(101, 0.5))).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    let small = state(Some(1), Some(2), ServerConfig { max_candidates: 3, ..ServerConfig::default() });
    let (status, _) = call(small, "POST", "/rerank", Some(request(4, 0.5))).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn missing_models_give_503_and_degraded_health() {
    let s = state(Some(1), None, ServerConfig::default());
    let (status, _) = call(s.clone(), "POST", "/rerank", Some(request(3, 0.5))).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    let (status, v) = call(s, "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_value(v).unwrap();
    assert!(!h.ready);
    assert_eq!(h.missing, vec![Facet::Method]);
}

#[tokio::test]
async fn full_queue_gives_429() {
    let s = state(Some(1), Some(2), ServerConfig { queue_capacity: 1, ..ServerConfig::default() });
    let held = s.queue().clone().try_acquire_owned().unwrap();
    let (status, _) = call(s.clone(), "POST", "/rerank", Some(request(2, 0.5))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    drop(held);
    let (status, _) = call(s, "POST", "/rerank", Some(request(2, 0.5))).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn health_reports_checkpoint_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (facet, seed) in [(Facet::Background, 1), (Facet::Method, 2)] {
        let m = model(facet, seed).model;
        checkpoint::save(&m, &dir.join(facet.as_str()), CreationMetadata::new(), Some(0.42), vec![0.3, 0.42]).unwrap();
    }
    let s = AppState::from_checkpoints(
        Some(&dir.join("background")),
        Some(&dir.join("method")),
        ServerConfig::default(),
    )
    .unwrap();
    let (_, v) = call(Arc::new(s), "GET", "/health", None).await;
    let h: Health = serde_json::from_value(v).unwrap();
    assert!(h.ready && h.missing.is_empty());
    assert_eq!(h.models.len(), 2);
    assert!(h.models.iter().all(|m| m.validation_metric == Some(0.42) && m.backbone_profile == "compact-from-scratch"));

    let swapped = AppState::from_checkpoints(Some(&dir.join("method")), None, ServerConfig::default());
    assert!(swapped.is_err());
}

#[tokio::test]
async fn corpus_lookup_fills_candidate_text() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let papers = dir.join("papers.jsonl");
    std::fs::write(
        &papers,
        "{\"paper_id\":\"p1\",\"title\":\"galaxy via kernel\",\"abstract\":\"a kernel model for galaxy\"}\n",
    )
    .unwrap();
    let s = AppState::new(Some(model(Facet::Background, 1)), Some(model(Facet::Method, 2)), ServerConfig::default())
        .with_corpus(&papers)
        .unwrap();
    let s = Arc::new(s);
    let body = json!({"seed": {"title": "t", "abstract": "a"}, "candidates": [{"candidate_id": "p1"}], "alpha": 0.5});
    let (status, _) = call(s.clone(), "POST", "/rerank", Some(body)).await;
    assert_eq!(status, StatusCode::OK);
    let body = json!({"seed": {"title": "t", "abstract": "a"}, "candidates": [{"candidate_id": "nope"}], "alpha": 0.5});
    assert_eq!(call(s, "POST", "/rerank", Some(body)).await.0, StatusCode::BAD_REQUEST);
}
