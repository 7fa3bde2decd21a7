//! Papers, seed/candidate pools, and their on-disk formats.
//!
//! `papers.jsonl` holds one [`Paper`] per line; `pools.jsonl` holds one
//! [`PoolRecord`] per line referencing papers by id. Ingestion never drops a
//! record silently: everything that fails validation lands in a
//! [`Rejection`] list with its line number.

#[cfg(feature = "http")]
pub mod http;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::io::{self, IoError};
use crate::net::{bounded_map, RateLimiter, RetryPolicy};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("invalid paper: {0}")]
    InvalidPaper(String),
    #[error("pool for seed `{seed}` references unknown paper `{paper}`")]
    UnknownPaper { seed: String, paper: String },
    #[error("recommendation request for `{seed}` failed after {attempts} attempts (last status: {status}): {message}")]
    Fetch {
        seed: String,
        attempts: u32,
        status: String,
        message: String,
    },
    #[error("corpus statistics need at least one pool")]
    NoPools,
    #[error("limit must be at least 1")]
    ZeroLimit,
}

/// Seed-domain categories used for corpus bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainTag {
    #[serde(alias = "gnn")]
    GraphNeuralNetworks,
    #[serde(alias = "cv")]
    ComputerVision,
    #[serde(alias = "nlp_text", alias = "text")]
    Nlp,
    #[serde(alias = "rl")]
    ReinforcementLearning,
    Other,
}

impl DomainTag {
    pub const ALL: [DomainTag; 5] = [
        DomainTag::GraphNeuralNetworks,
        DomainTag::ComputerVision,
        DomainTag::Nlp,
        DomainTag::ReinforcementLearning,
        DomainTag::Other,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DomainTag::GraphNeuralNetworks => "Graph Neural Networks",
            DomainTag::ComputerVision => "Computer Vision",
            DomainTag::Nlp => "NLP / Text",
            DomainTag::ReinforcementLearning => "Reinforcement Learning",
            DomainTag::Other => "Other",
        }
    }
}

/// One scientific document. Only title and abstract are ever used.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paper {
    pub paper_id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_tag: Option<DomainTag>,
}

impl Paper {
    pub fn new(id: impl Into<String>, title: impl Into<String>, abstract_text: impl Into<String>) -> Self {
        Self {
            paper_id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            domain_tag: None,
        }
    }

    pub fn with_domain(mut self, tag: DomainTag) -> Self {
        self.domain_tag = Some(tag);
        self
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.paper_id.trim().is_empty() {
            return Err(CorpusError::InvalidPaper("empty paper_id".into()));
        }
        if self.title.trim().is_empty() {
            return Err(CorpusError::InvalidPaper(format!("{}: empty title", self.paper_id)));
        }
        if self.abstract_text.trim().is_empty() {
            return Err(CorpusError::InvalidPaper(format!("{}: empty abstract", self.paper_id)));
        }
        Ok(())
    }
}

/// A record that failed ingestion, kept for dataset audits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub cause: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub papers: Vec<Paper>,
    pub rejections: Vec<Rejection>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct IngestOptions {
    /// Abstracts shorter than this many characters (after trimming) are rejected.
    pub min_abstract_chars: usize,
}

#[derive(Deserialize)]
struct RawPaper {
    paper_id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    #[serde(default)]
    domain_tag: Option<DomainTag>,
}

pub fn ingest_jsonl(path: &Path) -> Result<Ingested, CorpusError> {
    ingest_jsonl_with(path, &IngestOptions::default())
}

/// Reads `papers.jsonl`. Unreadable files are fatal; bad lines are rejected
/// individually, as are repeated paper ids (first occurrence wins).
pub fn ingest_jsonl_with(path: &Path, opts: &IngestOptions) -> Result<Ingested, CorpusError> {
    let mut out = Ingested::default();
    let mut seen = HashSet::new();
    for (line, text) in io::read_lines(path)? {
        let raw: RawPaper = match serde_json::from_str(&text) {
            Ok(r) => r,
            Err(e) => {
                out.rejections.push(Rejection { line, cause: format!("malformed JSON: {e}") });
                continue;
            }
        };
        let missing = [
            ("paper_id", raw.paper_id.as_deref()),
            ("title", raw.title.as_deref()),
            ("abstract", raw.abstract_text.as_deref()),
        ]
        .iter()
        .filter(|(_, v)| v.is_none_or(|s| s.trim().is_empty()))
        .map(|(k, _)| *k)
        .collect::<Vec<_>>();
        if !missing.is_empty() {
            out.rejections.push(Rejection {
                line,
                cause: format!("missing or empty field(s): {}", missing.join(", ")),
            });
            continue;
        }
        let paper = Paper {
            paper_id: raw.paper_id.unwrap_or_default().trim().to_string(),
            title: raw.title.unwrap_or_default().trim().to_string(),
            abstract_text: raw.abstract_text.unwrap_or_default().trim().to_string(),
            domain_tag: raw.domain_tag,
        };
        if paper.abstract_text.chars().count() < opts.min_abstract_chars {
            out.rejections.push(Rejection {
                line,
                cause: format!(
                    "abstract shorter than {} characters",
                    opts.min_abstract_chars
                ),
            });
            continue;
        }
        if !seen.insert(paper.paper_id.clone()) {
            out.rejections.push(Rejection {
                line,
                cause: format!("duplicate paper_id `{}`", paper.paper_id),
            });
            continue;
        }
        out.papers.push(paper);
    }
    Ok(out)
}

pub fn write_papers(path: &Path, papers: &[Paper]) -> Result<(), CorpusError> {
    Ok(io::write_jsonl(path, papers)?)
}

/// Where a pool's candidates came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// Seconds since the Unix epoch.
    pub retrieved_at: u64,
}

impl Provenance {
    pub fn now(source: impl Into<String>) -> Self {
        let secs = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            source: source.into(),
            retrieved_at: secs,
        }
    }
}

/// A seed paper and its ordered candidates.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    pub seed: Paper,
    pub candidates: Vec<Paper>,
    pub provenance: Provenance,
}

/// Counts of what [`CandidatePool::build`] filtered out.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PoolFilterReport {
    pub self_matches: usize,
    pub duplicates: usize,
    pub missing_abstract: usize,
}

impl CandidatePool {
    /// Applies the pool invariants: drops the seed itself, repeated ids and
    /// candidates without a usable title or abstract, keeping input order.
    pub fn build(seed: Paper, raw: Vec<Paper>, provenance: Provenance) -> (Self, PoolFilterReport) {
        let mut report = PoolFilterReport::default();
        let mut seen = HashSet::new();
        let mut candidates = Vec::with_capacity(raw.len());
        for c in raw {
            if c.paper_id == seed.paper_id {
                report.self_matches += 1;
            } else if c.validate().is_err() {
                report.missing_abstract += 1;
            } else if !seen.insert(c.paper_id.clone()) {
                report.duplicates += 1;
            } else {
                candidates.push(c);
            }
        }
        (
            Self {
                seed,
                candidates,
                provenance,
            },
            report,
        )
    }

    pub fn pair_count(&self) -> usize {
        self.candidates.len()
    }

    pub fn to_record(&self) -> PoolRecord {
        PoolRecord {
            seed_id: self.seed.paper_id.clone(),
            candidate_ids: self.candidates.iter().map(|c| c.paper_id.clone()).collect(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Line format of `pools.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub seed_id: String,
    pub candidate_ids: Vec<String>,
    pub provenance: Provenance,
}

/// Paper lookup by id.
pub type PaperIndex = HashMap<String, Paper>;

pub fn index_papers(papers: &[Paper]) -> PaperIndex {
    papers.iter().map(|p| (p.paper_id.clone(), p.clone())).collect()
}

pub fn read_pools(path: &Path, index: &PaperIndex) -> Result<Vec<CandidatePool>, CorpusError> {
    let records: Vec<PoolRecord> = io::read_jsonl(path)?;
    records.into_iter().map(|r| resolve_pool(r, index)).collect()
}

pub fn resolve_pool(record: PoolRecord, index: &PaperIndex) -> Result<CandidatePool, CorpusError> {
    let lookup = |id: &str| {
        index.get(id).cloned().ok_or_else(|| CorpusError::UnknownPaper {
            seed: record.seed_id.clone(),
            paper: id.to_string(),
        })
    };
    let seed = lookup(&record.seed_id)?;
    let raw = record
        .candidate_ids
        .iter()
        .map(|id| lookup(id))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CandidatePool::build(seed, raw, record.provenance.clone()).0)
}

pub fn write_pools(path: &Path, pools: &[CandidatePool]) -> Result<(), CorpusError> {
    let records: Vec<PoolRecord> = pools.iter().map(CandidatePool::to_record).collect();
    Ok(io::write_jsonl(path, &records)?)
}

/// One recommendation as returned by the service, before validation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RawRecommendation {
    pub paper_id: String,
    pub title: Option<String>,
    pub abstract_text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{message}")]
pub struct ServiceError {
    /// HTTP status, when the failure got that far.
    pub status: Option<u16>,
    pub message: String,
}

/// A paper-recommendation service.
pub trait RecommendationClient: Sync {
    fn name(&self) -> &str;
    fn recommend(&self, paper_id: &str, limit: usize) -> Result<Vec<RawRecommendation>, ServiceError>;
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct FetchOptions {
    pub limit: usize,
    pub parallelism: usize,
    pub requests_per_second: f64,
    pub retry: RetryPolicy,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            limit: 30,
            parallelism: 4,
            requests_per_second: 1.0,
            retry: RetryPolicy::default(),
        }
    }
}

/// Fetches up to `limit` usable candidates for one seed.
pub fn fetch_recommendations(
    seed: &Paper,
    limit: usize,
    client: &dyn RecommendationClient,
    retry: &RetryPolicy,
) -> Result<CandidatePool, CorpusError> {
    fetch_limited(seed, limit, client, retry, &RateLimiter::unlimited())
}

fn fetch_limited(
    seed: &Paper,
    limit: usize,
    client: &dyn RecommendationClient,
    retry: &RetryPolicy,
    limiter: &RateLimiter,
) -> Result<CandidatePool, CorpusError> {
    if limit == 0 {
        return Err(CorpusError::ZeroLimit);
    }
    let attempts = retry.max_attempts.max(1);
    let mut last: Option<ServiceError> = None;
    for attempt in 1..=attempts {
        limiter.acquire();
        match client.recommend(&seed.paper_id, limit) {
            Ok(raw) => {
                let papers = raw
                    .into_iter()
                    .map(|r| Paper {
                        paper_id: r.paper_id.trim().to_string(),
                        title: r.title.unwrap_or_default().trim().to_string(),
                        abstract_text: r.abstract_text.unwrap_or_default().trim().to_string(),
                        domain_tag: None,
                    })
                    .collect();
                let (mut pool, report) =
                    CandidatePool::build(seed.clone(), papers, Provenance::now(client.name()));
                pool.candidates.truncate(limit);
                tracing::debug!(seed = %seed.paper_id, kept = pool.candidates.len(), ?report, "fetched pool");
                return Ok(pool);
            }
            Err(e) => {
                tracing::warn!(seed = %seed.paper_id, attempt, status = ?e.status, "recommendation request failed: {}", e.message);
                last = Some(e);
                if attempt < attempts {
                    retry.sleep(attempt);
                }
            }
        }
    }
    let last = last.expect("at least one attempt");
    Err(CorpusError::Fetch {
        seed: seed.paper_id.clone(),
        attempts,
        status: last.status.map_or_else(|| "none".to_string(), |s| s.to_string()),
        message: last.message,
    })
}

/// Fetches pools for many seeds under a parallelism bound and a shared
/// rate limit. Results are in seed order.
pub fn fetch_all(
    seeds: &[Paper],
    client: &dyn RecommendationClient,
    opts: &FetchOptions,
) -> Vec<Result<CandidatePool, CorpusError>> {
    let limiter = RateLimiter::per_second(opts.requests_per_second);
    bounded_map(seeds, opts.parallelism, |_, seed| {
        fetch_limited(seed, opts.limit, client, &opts.retry, &limiter)
    })
}

/// Method-oriented search keywords per seed domain, used as fetch defaults.
pub fn default_seed_keywords() -> BTreeMap<&'static str, Vec<&'static str>> {
    BTreeMap::from([
        (
            "Graph Neural Networks",
            vec!["graph neural network", "graph convolutional network", "message passing neural network"],
        ),
        (
            "Computer Vision",
            vec!["vision transformer", "convolutional neural network", "object detection"],
        ),
        (
            "NLP",
            vec!["transformer", "language model", "named entity recognition", "machine translation"],
        ),
        ("Reinforcement Learning", vec!["policy gradient", "Q-learning", "actor-critic"]),
        (
            "General",
            vec!["contrastive learning", "self-supervised learning", "diffusion model"],
        ),
    ])
}

/// Summary of a set of pools.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub seeds: usize,
    pub pairs: usize,
    pub seeds_per_domain: BTreeMap<String, usize>,
    /// Abstract length in whitespace tokens over all distinct papers: (percentile, value).
    pub abstract_words_percentiles: Vec<(u8, usize)>,
}

pub fn corpus_stats(pools: &[CandidatePool]) -> Result<CorpusStats, CorpusError> {
    if pools.is_empty() {
        return Err(CorpusError::NoPools);
    }
    let mut per_domain = BTreeMap::new();
    for p in pools {
        let key = p.seed.domain_tag.map_or("untagged", DomainTag::label);
        *per_domain.entry(key.to_string()).or_insert(0) += 1;
    }
    let mut seen = HashSet::new();
    let mut lengths: Vec<usize> = pools
        .iter()
        .flat_map(|p| std::iter::once(&p.seed).chain(p.candidates.iter()))
        .filter(|p| seen.insert(p.paper_id.as_str()))
        .map(|p| p.abstract_text.split_whitespace().count())
        .collect();
    lengths.sort_unstable();
    let percentiles = [10u8, 50, 90]
        .iter()
        .map(|&q| (q, nearest_rank(&lengths, q)))
        .collect();
    Ok(CorpusStats {
        seeds: pools.len(),
        pairs: pools.iter().map(CandidatePool::pair_count).sum(),
        seeds_per_domain: per_domain,
        abstract_words_percentiles: percentiles,
    })
}

fn nearest_rank(sorted: &[usize], q: u8) -> usize {
    if sorted.is_empty() {
        return 0;
    }
    let rank = ((q as f64 / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "| Domain | Seeds |")?;
        writeln!(f, "|---|---:|")?;
        for (domain, n) in &self.seeds_per_domain {
            writeln!(f, "| {domain} | {n} |")?;
        }
        writeln!(f, "| Total | {} |", self.seeds)?;
        writeln!(f)?;
        writeln!(f, "seed-candidate pairs: {}", self.pairs)?;
        let pct: Vec<String> = self
            .abstract_words_percentiles
            .iter()
            .map(|(q, v)| format!("p{q}={v}"))
            .collect();
        write!(f, "abstract words: {}", pct.join(" "))
    }
}
