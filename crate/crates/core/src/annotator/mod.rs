//! LLM facet annotation of seed/candidate pairs.
//!
//! Each pair is sent to a chat model with the rubric prompt from [`prompt`];
//! replies are validated by [`parse::parse_annotation`]. Successful replies
//! are cached by `hash(prompt, model, temperature)` in an append-only JSONL
//! file so interrupted runs resume without repeating calls.

pub mod client;
pub mod parse;
pub mod prompt;

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

pub use self::client::{ChatClient, ChatRequest, ReplayClient, ReplayEntry};
pub use self::parse::{parse_annotation, render_annotation, ParseCategory, ParseError};
pub use self::prompt::{build_prompt, Prompt, SYSTEM_PROMPT};
use crate::corpus::{CandidatePool, Paper};
use crate::facet::Facet;
use crate::io::{self, sha256_hex, IoError};
use crate::net::{bounded_map, RateLimiter, RetryPolicy};

/// One facet grade with its one-sentence justification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FacetLabel {
    pub facet: Facet,
    pub score: u8,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorMeta {
    pub model: String,
    pub temperature: f64,
    pub prompt_hash: String,
    pub timestamp: String,
}

/// A seed/candidate pair graded on both facets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LabelRecord", try_from = "LabelRecord")]
pub struct LabeledPair {
    pub seed_id: String,
    pub candidate_id: String,
    pub background: FacetLabel,
    pub method: FacetLabel,
    pub annotator_meta: AnnotatorMeta,
}

impl LabeledPair {
    pub fn score(&self, facet: Facet) -> u8 {
        match facet {
            Facet::Background => self.background.score,
            Facet::Method => self.method.score,
        }
    }

    /// Identifier used when aligning against other annotators.
    pub fn pair_id(&self) -> String {
        pair_id(&self.seed_id, &self.candidate_id)
    }
}

pub fn pair_id(seed_id: &str, candidate_id: &str) -> String {
    format!("{seed_id}::{candidate_id}")
}

/// Flat line format of `labels.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub seed_id: String,
    pub candidate_id: String,
    pub bg_score: u8,
    pub bg_reason: String,
    pub mt_score: u8,
    pub mt_reason: String,
    pub annotator_meta: AnnotatorMeta,
}

impl From<LabeledPair> for LabelRecord {
    fn from(p: LabeledPair) -> Self {
        Self {
            seed_id: p.seed_id,
            candidate_id: p.candidate_id,
            bg_score: p.background.score,
            bg_reason: p.background.reason,
            mt_score: p.method.score,
            mt_reason: p.method.reason,
            annotator_meta: p.annotator_meta,
        }
    }
}

impl TryFrom<LabelRecord> for LabeledPair {
    type Error = String;

    fn try_from(r: LabelRecord) -> Result<Self, Self::Error> {
        if r.bg_score > 3 || r.mt_score > 3 {
            return Err(format!(
                "scores must be 0-3 (got bg={}, mt={})",
                r.bg_score, r.mt_score
            ));
        }
        Ok(Self {
            seed_id: r.seed_id,
            candidate_id: r.candidate_id,
            background: FacetLabel {
                facet: Facet::Background,
                score: r.bg_score,
                reason: r.bg_reason,
            },
            method: FacetLabel {
                facet: Facet::Method,
                score: r.mt_score,
                reason: r.mt_reason,
            },
            annotator_meta: r.annotator_meta,
        })
    }
}

pub fn read_labels(path: &Path) -> Result<Vec<LabeledPair>, IoError> {
    io::read_jsonl(path)
}

pub fn write_labels(path: &Path, labels: &[LabeledPair]) -> Result<(), IoError> {
    io::write_jsonl(path, labels)
}

/// Source of annotation timestamps.
pub trait Clock: Sync {
    fn now(&self) -> String;
}

/// Wall-clock time as `YYYY-MM-DDTHH:MM:SSZ`.
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> String {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        format_utc(secs)
    }
}

/// Always returns the same timestamp; makes runs byte-reproducible.
pub struct FixedClock(pub String);

impl Clock for FixedClock {
    fn now(&self) -> String {
        self.0.clone()
    }
}

fn format_utc(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    // Civil-from-days (proleptic Gregorian).
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let day = doy - (153 * mp + 2) / 5 + 1;
    let month = if mp < 10 { mp + 3 } else { mp - 9 };
    let year = yoe + era * 400 + i64::from(month <= 2);
    format!(
        "{year:04}-{month:02}-{day:02}T{:02}:{:02}:{:02}Z",
        rem / 3600,
        (rem / 60) % 60,
        rem % 60
    )
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct AnnotatorConfig {
    pub model: String,
    pub temperature: f64,
    pub retry: RetryPolicy,
    pub parallelism: usize,
    pub requests_per_second: f64,
}

impl Default for AnnotatorConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o-mini".into(),
            temperature: 0.0,
            retry: RetryPolicy::default(),
            parallelism: 4,
            requests_per_second: 5.0,
        }
    }
}

/// Cache key: prompt content, model and temperature.
pub fn cache_key(prompt: &Prompt, model: &str, temperature: f64) -> String {
    sha256_hex(format!("{}\0{}\0{:?}", prompt.hash(), model, temperature).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheEntry {
    key: String,
    raw_response: String,
    background: FacetLabel,
    method: FacetLabel,
    meta: AnnotatorMeta,
}

/// Append-only annotation cache. All writes go through one lock, so the
/// backing file only ever sees whole lines from a single writer.
pub struct LabelCache {
    inner: Mutex<CacheInner>,
}

struct CacheInner {
    entries: HashMap<String, CacheEntry>,
    sink: Option<BufWriter<File>>,
}

impl LabelCache {
    pub fn in_memory() -> Self {
        Self {
            inner: Mutex::new(CacheInner {
                entries: HashMap::new(),
                sink: None,
            }),
        }
    }

    /// Opens (or creates) a cache file and loads its entries. A truncated
    /// final line from an interrupted run is ignored.
    pub fn open(path: &Path) -> Result<Self, IoError> {
        io::ensure_parent(path)?;
        let mut entries = HashMap::new();
        if path.exists() {
            for (_, line) in io::read_lines(path)? {
                if let Ok(e) = serde_json::from_str::<CacheEntry>(&line) {
                    entries.insert(e.key.clone(), e);
                }
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| IoError::io(path, e))?;
        Ok(Self {
            inner: Mutex::new(CacheInner {
                entries,
                sink: Some(BufWriter::new(file)),
            }),
        })
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache poisoned").entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn get(&self, key: &str) -> Option<CacheEntry> {
        self.inner.lock().expect("cache poisoned").entries.get(key).cloned()
    }

    fn put(&self, entry: CacheEntry) -> std::io::Result<()> {
        let mut inner = self.inner.lock().expect("cache poisoned");
        if let Some(sink) = inner.sink.as_mut() {
            let line = serde_json::to_string(&entry).map_err(std::io::Error::other)?;
            writeln!(sink, "{line}")?;
            sink.flush()?;
        }
        inner.entries.insert(entry.key.clone(), entry);
        Ok(())
    }
}

/// A pair that could not be annotated, with the last raw reply for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
#[error("annotation of {seed_id}/{candidate_id} failed after {attempts} attempts: {last_error}")]
pub struct AnnotationError {
    pub seed_id: String,
    pub candidate_id: String,
    pub attempts: u32,
    pub last_error: String,
    pub category: Option<ParseCategory>,
    pub last_raw: Option<String>,
}

pub fn annotate_pair(
    seed: &Paper,
    candidate: &Paper,
    client: &dyn ChatClient,
    cfg: &AnnotatorConfig,
    cache: &LabelCache,
    clock: &dyn Clock,
) -> Result<LabeledPair, AnnotationError> {
    annotate_limited(seed, candidate, client, cfg, cache, clock, &RateLimiter::unlimited())
}

fn annotate_limited(
    seed: &Paper,
    candidate: &Paper,
    client: &dyn ChatClient,
    cfg: &AnnotatorConfig,
    cache: &LabelCache,
    clock: &dyn Clock,
    limiter: &RateLimiter,
) -> Result<LabeledPair, AnnotationError> {
    let prompt = build_prompt(seed, candidate);
    let key = cache_key(&prompt, &cfg.model, cfg.temperature);
    let labeled = |e: CacheEntry| LabeledPair {
        seed_id: seed.paper_id.clone(),
        candidate_id: candidate.paper_id.clone(),
        background: e.background,
        method: e.method,
        annotator_meta: e.meta,
    };
    if let Some(hit) = cache.get(&key) {
        return Ok(labeled(hit));
    }

    let request = ChatRequest {
        model: &cfg.model,
        temperature: cfg.temperature,
        system: prompt.system,
        user: &prompt.user,
    };
    let attempts = cfg.retry.max_attempts.max(1);
    let mut failure = AnnotationError {
        seed_id: seed.paper_id.clone(),
        candidate_id: candidate.paper_id.clone(),
        attempts,
        last_error: String::new(),
        category: None,
        last_raw: None,
    };
    for attempt in 1..=attempts {
        limiter.acquire();
        match client.complete(&request) {
            Ok(raw) => match parse_annotation(&raw) {
                Ok((background, method)) => {
                    let entry = CacheEntry {
                        key: key.clone(),
                        raw_response: raw,
                        background,
                        method,
                        meta: AnnotatorMeta {
                            model: cfg.model.clone(),
                            temperature: cfg.temperature,
                            prompt_hash: prompt.hash(),
                            timestamp: clock.now(),
                        },
                    };
                    if let Err(e) = cache.put(entry.clone()) {
                        tracing::warn!("could not persist cache entry: {e}");
                    }
                    return Ok(labeled(entry));
                }
                Err(e) => {
                    failure.last_error = e.to_string();
                    failure.category = Some(e.category);
                    failure.last_raw = Some(raw);
                }
            },
            Err(e) => {
                failure.last_error = format!("transport: {e}");
                failure.category = None;
            }
        }
        if attempt < attempts {
            cfg.retry.sleep(attempt);
        }
    }
    Err(failure)
}

#[derive(Debug, Clone, Default)]
pub struct AnnotationRun {
    pub labels: Vec<LabeledPair>,
    pub errors: Vec<AnnotationError>,
}

/// Annotates every (seed, candidate) pair. Failures are collected, never
/// fatal; output order follows pool order, then candidate order.
pub fn annotate_corpus(
    pools: &[CandidatePool],
    client: &dyn ChatClient,
    cfg: &AnnotatorConfig,
    cache: &LabelCache,
    clock: &dyn Clock,
) -> AnnotationRun {
    let pairs: Vec<(&Paper, &Paper)> = pools
        .iter()
        .flat_map(|p| p.candidates.iter().map(move |c| (&p.seed, c)))
        .collect();
    let limiter = RateLimiter::per_second(cfg.requests_per_second);
    let results = bounded_map(&pairs, cfg.parallelism, |_, (seed, cand)| {
        annotate_limited(seed, cand, client, cfg, cache, clock, &limiter)
    });
    let mut run = AnnotationRun::default();
    for r in results {
        match r {
            Ok(l) => run.labels.push(l),
            Err(e) => run.errors.push(e),
        }
    }
    tracing::info!(labels = run.labels.len(), errors = run.errors.len(), "annotation finished");
    run
}

pub fn write_errors(path: &Path, errors: &[AnnotationError]) -> Result<(), IoError> {
    io::write_jsonl(path, errors)
}

/// Per-category failure counts for an error report.
pub fn summarize_errors(errors: &[AnnotationError]) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for e in errors {
        let key = match e.category {
            Some(c) => format!("{c:?}"),
            None => "Transport".to_string(),
        };
        *counts.entry(key).or_default() += 1;
    }
    let mut out: Vec<_> = counts.into_iter().collect();
    out.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Default on-disk location for the cache next to a labels file.
pub fn default_cache_path(labels_path: &Path) -> PathBuf {
    labels_path.with_extension("cache.jsonl")
}
