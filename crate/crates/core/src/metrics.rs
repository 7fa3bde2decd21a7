//! Graded-relevance ranking metrics and tie-aware rank correlation.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("duplicate candidate id `{0}`")]
    DuplicateId(String),
    #[error("cutoff fraction must be in (0, 1], got {0}")]
    BadPercent(f64),
    #[error("no entry has relevance above zero")]
    NoRelevant,
    #[error("no entry has relevance >= {0}")]
    NoneAtThreshold(u8),
    #[error("correlation needs equal-length inputs of at least 2 values (got {0} and {1})")]
    Length(usize, usize),
    #[error("correlation is undefined for a constant input")]
    Constant,
    #[error("relevance grade {0} outside 0-3")]
    GradeRange(u8),
}

/// How a relevance grade turns into DCG gain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gain {
    /// `2^rel - 1`
    #[default]
    Exponential,
    /// `rel`
    Linear,
}

impl Gain {
    pub fn apply(self, rel: u8) -> f64 {
        match self {
            Gain::Exponential => (1u64 << rel) as f64 - 1.0,
            Gain::Linear => rel as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// NDCG cutoff as a fraction of pool size.
    pub ndcg_percent: f64,
    pub gain: Gain,
    /// Grades at or above this count as relevant for MAP.
    pub map_threshold: u8,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            ndcg_percent: 0.20,
            gain: Gain::Exponential,
            map_threshold: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub candidate_id: String,
    pub score: f64,
    pub relevance: u8,
}

/// Candidates of one query, sorted by score descending then id ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedList {
    pub query_id: String,
    entries: Vec<RankedEntry>,
}

impl RankedList {
    pub fn new(query_id: impl Into<String>, mut entries: Vec<RankedEntry>) -> Result<Self, MetricError> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.candidate_id.as_str()) {
                return Err(MetricError::DuplicateId(e.candidate_id.clone()));
            }
            if e.relevance > 3 {
                return Err(MetricError::GradeRange(e.relevance));
            }
        }
        entries.sort_by(|a, b| score_order(a.score, &a.candidate_id, b.score, &b.candidate_id));
        Ok(Self {
            query_id: query_id.into(),
            entries,
        })
    }

    pub fn entries(&self) -> &[RankedEntry] {
        &self.entries
    }

    pub fn relevances(&self) -> Vec<u8> {
        self.entries.iter().map(|e| e.relevance).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Descending score, then ascending id. NaN sorts last.
fn score_order(sa: f64, ida: &str, sb: f64, idb: &str) -> Ordering {
    match (sa.is_nan(), sb.is_nan()) {
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        _ => sb.partial_cmp(&sa).unwrap_or(Ordering::Equal),
    }
    .then_with(|| ida.cmp(idb))
}

/// Deterministic ranking: score descending, ties by id ascending.
pub fn rank_candidates<S: AsRef<str>>(scores: &[(S, f64)]) -> Result<Vec<String>, MetricError> {
    let mut seen = HashSet::new();
    for (id, _) in scores {
        if !seen.insert(id.as_ref()) {
            return Err(MetricError::DuplicateId(id.as_ref().to_string()));
        }
    }
    let mut order: Vec<&(S, f64)> = scores.iter().collect();
    order.sort_by(|a, b| score_order(a.1, a.0.as_ref(), b.1, b.0.as_ref()));
    Ok(order.into_iter().map(|(id, _)| id.as_ref().to_string()).collect())
}

/// Cutoff depth for a pool: `max(1, round_half_up(percent * n))`.
pub fn percent_cutoff(n: usize, percent: f64) -> usize {
    // The epsilon keeps products like 0.3 * 5 = 1.4999999999999998 rounding up.
    let k = (percent * n as f64 + 0.5 + 1e-9).floor().max(0.0) as usize;
    k.max(1)
}

fn dcg(rels: impl IntoIterator<Item = u8>, gain: Gain) -> f64 {
    rels.into_iter()
        .enumerate()
        .map(|(i, r)| gain.apply(r) / ((i + 2) as f64).log2())
        .sum()
}

/// NDCG at a per-query depth of `percent` of the pool.
pub fn ndcg_percent_k(list: &RankedList, percent: f64, gain: Gain) -> Result<f64, MetricError> {
    if !(percent > 0.0 && percent <= 1.0) {
        return Err(MetricError::BadPercent(percent));
    }
    let rels = list.relevances();
    if !rels.iter().any(|&r| r > 0) {
        return Err(MetricError::NoRelevant);
    }
    let k = percent_cutoff(rels.len(), percent).min(rels.len());
    let mut ideal = rels.clone();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let actual = dcg(rels.iter().copied().take(k), gain);
    let best = dcg(ideal.into_iter().take(k), gain);
    Ok(actual / best)
}

/// Average precision over the full list with relevance binarized at
/// `binarize_at`.
pub fn average_precision(list: &RankedList, binarize_at: u8) -> Result<f64, MetricError> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, e) in list.entries().iter().enumerate() {
        if e.relevance >= binarize_at {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(MetricError::NoneAtThreshold(binarize_at));
    }
    Ok(sum / hits as f64)
}

/// Alias kept for the per-query call site; MAP over many queries is the
/// plain mean of these values (see [`mean`]).
pub fn mean_average_precision(list: &RankedList, binarize_at: u8) -> Result<f64, MetricError> {
    average_precision(list, binarize_at)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// 1-based ranks with ties sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && values[idx[j + 1]] == values[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricError::Length(x.len(), y.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricError::Constant);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Spearman's rho: Pearson correlation of tie-averaged ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricError> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(MetricError::Length(x.len(), y.len()));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}
