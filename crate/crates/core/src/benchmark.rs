//! Evaluation harness: faceted query-by-example benchmarks, leakage checks,
//! per-query NDCG%k / MAP reports and the label-scale ablation.
//!
//! Two on-disk layouts are read:
//!
//! * normalized: `queries.jsonl`, one [`EvalQuery`] per line;
//! * CSFCube release: `abstracts-csfcube-preds.jsonl` plus
//!   `test-pid2anns-csfcube-{background,method,result}.json`, where each
//!   annotation file maps a query id to `{"cands": [...], "relevance_adju": [...]}`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotator::LabeledPair;
use crate::corpus::{Paper, PaperIndex};
use crate::encoder::{EncoderError, FacetModel};
use crate::facet::Facet;
use crate::io::{self, IoError};
use crate::metrics::{self, Gain, MetricConfig, MetricError, RankedEntry, RankedList};
use crate::trainer::{self, TrainConfig, TrainError, TrainingData};
use crate::triplets::{build_triplets, effective_pools, LabelScale, MergePolicy, SplitSpec, TripletError};

pub const QUERIES_FILE: &str = "queries.jsonl";
pub const CSFCUBE_ABSTRACTS: &str = "abstracts-csfcube-preds.jsonl";
pub const TAINT_BANNER: &str = "LEAKAGE CHECK WAIVED: training and benchmark papers may overlap; numbers are not reportable";

/// Full-scale reference for the label-scale ablation, NDCG%20 in percent.
pub const REFERENCE_NDCG_FULL_SCALE: f64 = 45.57;
pub const REFERENCE_NDCG_MERGED_SCALE: f64 = 49.06;

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("unknown benchmark facet `{0}`")]
    UnknownFacet(String),
    #[error("{0}: no recognised benchmark layout ({QUERIES_FILE} or {CSFCUBE_ABSTRACTS})")]
    Layout(String),
    #[error("model facet {model} does not match query facet {query}")]
    FacetMismatch { model: String, query: String },
    #[error("{count} papers overlap between training and benchmark; waive explicitly to evaluate anyway")]
    Leakage { count: usize },
    #[error("leakage was not checked; pass a leakage report or waive the check")]
    LeakageUnchecked,
    #[error("report means disagree with per-query rows: {0}")]
    Inconsistent(String),
    #[error("no queries to evaluate")]
    NoQueries,
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
}

/// Facets a benchmark may be annotated with. `Result` can be loaded but no
/// model is trained for it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchFacet {
    Background,
    Method,
    Result,
}

impl BenchFacet {
    pub fn as_str(self) -> &'static str {
        match self {
            BenchFacet::Background => "background",
            BenchFacet::Method => "method",
            BenchFacet::Result => "result",
        }
    }

    pub fn model_facet(self) -> Option<Facet> {
        match self {
            BenchFacet::Background => Some(Facet::Background),
            BenchFacet::Method => Some(Facet::Method),
            BenchFacet::Result => None,
        }
    }
}

impl From<Facet> for BenchFacet {
    fn from(f: Facet) -> Self {
        match f {
            Facet::Background => BenchFacet::Background,
            Facet::Method => BenchFacet::Method,
        }
    }
}

impl fmt::Display for BenchFacet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BenchFacet {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bg" | "background" => Ok(BenchFacet::Background),
            "mt" | "method" => Ok(BenchFacet::Method),
            "rs" | "result" => Ok(BenchFacet::Result),
            other => Err(BenchmarkError::UnknownFacet(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolItem {
    pub paper: Paper,
    pub relevance: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalQuery {
    pub query: Paper,
    pub facet: BenchFacet,
    pub pool: Vec<PoolItem>,
}

/// An entry dropped while loading.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRejection {
    pub query_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub candidate_id: Option<String>,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedBenchmark {
    pub queries: Vec<EvalQuery>,
    pub rejections: Vec<BenchRejection>,
}

impl LoadedBenchmark {
    /// Every paper id referenced, queries and pool entries alike.
    pub fn paper_ids(&self) -> BTreeSet<String> {
        self.queries
            .iter()
            .flat_map(|q| std::iter::once(&q.query.paper_id).chain(q.pool.iter().map(|p| &p.paper.paper_id)))
            .cloned()
            .collect()
    }
}

/// Drops pool entries without text, out-of-range grades and the query
/// itself; drops queries left with an empty pool.
fn sanitize(queries: Vec<EvalQuery>, rejections: &mut Vec<BenchRejection>) -> Vec<EvalQuery> {
    let mut out = Vec::new();
    for mut q in queries {
        let qid = q.query.paper_id.clone();
        if q.query.title.trim().is_empty() || q.query.abstract_text.trim().is_empty() {
            rejections.push(BenchRejection {
                query_id: qid,
                candidate_id: None,
                reason: "query lacks title or abstract".into(),
            });
            continue;
        }
        let mut seen = BTreeSet::new();
        q.pool.retain(|item| {
            let cid = &item.paper.paper_id;
            let reason = if *cid == qid {
                Some("query appears in its own pool")
            } else if item.paper.title.trim().is_empty() || item.paper.abstract_text.trim().is_empty() {
                Some("missing title or abstract")
            } else if item.relevance > 3 {
                Some("relevance outside 0-3")
            } else if !seen.insert(cid.clone()) {
                Some("duplicate candidate")
            } else {
                None
            };
            if let Some(r) = reason {
                rejections.push(BenchRejection {
                    query_id: qid.clone(),
                    candidate_id: Some(cid.clone()),
                    reason: r.into(),
                });
            }
            reason.is_none()
        });
        if q.pool.is_empty() {
            rejections.push(BenchRejection {
                query_id: qid,
                candidate_id: None,
                reason: "empty pool".into(),
            });
            continue;
        }
        out.push(q);
    }
    out.sort_by(|a, b| a.query.paper_id.cmp(&b.query.paper_id));
    out
}

/// Queries of `facet` from a benchmark directory (or a normalized JSONL
/// file), sorted by query id.
pub fn load_benchmark(path: &Path, facet: BenchFacet) -> Result<LoadedBenchmark, BenchmarkError> {
    let mut rejections = Vec::new();
    let raw = if path.is_file() {
        read_normalized(path, facet)?
    } else if path.join(QUERIES_FILE).is_file() {
        read_normalized(&path.join(QUERIES_FILE), facet)?
    } else if path.join(CSFCUBE_ABSTRACTS).is_file() {
        read_csfcube(path, facet, &mut rejections)?
    } else {
        return Err(BenchmarkError::Layout(path.display().to_string()));
    };
    let queries = sanitize(raw, &mut rejections);
    Ok(LoadedBenchmark { queries, rejections })
}

fn read_normalized(path: &Path, facet: BenchFacet) -> Result<Vec<EvalQuery>, BenchmarkError> {
    Ok(io::read_jsonl::<EvalQuery>(path)?.into_iter().filter(|q| q.facet == facet).collect())
}

#[derive(Debug, Deserialize)]
struct CsfAbstract {
    paper_id: String,
    #[serde(default)]
    title: Option<String>,
    #[serde(default, rename = "abstract")]
    abstract_text: Option<TextOrSentences>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TextOrSentences {
    Text(String),
    Sentences(Vec<String>),
}

impl TextOrSentences {
    fn join(self) -> String {
        match self {
            TextOrSentences::Text(t) => t,
            TextOrSentences::Sentences(s) => s.join(" "),
        }
    }
}

#[derive(Debug, Deserialize)]
struct CsfAnnotations {
    cands: Vec<String>,
    relevance_adju: Vec<u8>,
}

fn read_csfcube(dir: &Path, facet: BenchFacet, rejections: &mut Vec<BenchRejection>) -> Result<Vec<EvalQuery>, BenchmarkError> {
    let mut papers: HashMap<String, Paper> = HashMap::new();
    for a in io::read_jsonl::<CsfAbstract>(&dir.join(CSFCUBE_ABSTRACTS))? {
        let paper = Paper::new(
            a.paper_id.clone(),
            a.title.unwrap_or_default(),
            a.abstract_text.map(TextOrSentences::join).unwrap_or_default(),
        );
        papers.insert(a.paper_id, paper);
    }
    let ann_path = dir.join(format!("test-pid2anns-csfcube-{}.json", facet.as_str()));
    let anns: BTreeMap<String, CsfAnnotations> = io::read_json(&ann_path)?;
    let suffix = format!("_{}", facet.as_str());
    let mut out = Vec::new();
    for (key, ann) in anns {
        let qid = key.strip_suffix(&suffix).unwrap_or(&key).to_string();
        let Some(query) = papers.get(&qid).cloned() else {
            rejections.push(BenchRejection {
                query_id: qid,
                candidate_id: None,
                reason: "query paper missing from abstracts file".into(),
            });
            continue;
        };
        if ann.cands.len() != ann.relevance_adju.len() {
            rejections.push(BenchRejection {
                query_id: qid,
                candidate_id: None,
                reason: format!("{} candidates but {} grades", ann.cands.len(), ann.relevance_adju.len()),
            });
            continue;
        }
        let mut pool = Vec::new();
        for (cid, rel) in ann.cands.into_iter().zip(ann.relevance_adju) {
            match papers.get(&cid) {
                Some(p) => pool.push(PoolItem {
                    paper: p.clone(),
                    relevance: rel,
                }),
                None => rejections.push(BenchRejection {
                    query_id: qid.clone(),
                    candidate_id: Some(cid),
                    reason: "candidate missing from abstracts file".into(),
                }),
            }
        }
        out.push(EvalQuery { query, facet, pool });
    }
    Ok(out)
}

pub fn write_queries(path: &Path, queries: &[EvalQuery]) -> Result<(), BenchmarkError> {
    Ok(io::write_jsonl(path, queries)?)
}

/// Ids present in both sets, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub train_papers: usize,
    pub bench_papers: usize,
    pub overlap: Vec<String>,
}

impl LeakageReport {
    pub fn is_clean(&self) -> bool {
        self.overlap.is_empty()
    }
}

pub fn check_leakage<A: AsRef<str>, B: AsRef<str>>(
    train_papers: impl IntoIterator<Item = A>,
    bench_papers: impl IntoIterator<Item = B>,
) -> LeakageReport {
    let train: BTreeSet<String> = train_papers.into_iter().map(|s| s.as_ref().to_string()).collect();
    let bench: BTreeSet<String> = bench_papers.into_iter().map(|s| s.as_ref().to_string()).collect();
    LeakageReport {
        train_papers: train.len(),
        bench_papers: bench.len(),
        overlap: train.intersection(&bench).cloned().collect(),
    }
}

/// Anything that scores candidates against a query for one facet.
pub trait PairScorer: Sync {
    fn facet(&self) -> Facet;
    fn id(&self) -> String;
    fn score_pool(&self, query: &Paper, candidates: &[&Paper]) -> Result<Vec<f64>, BenchmarkError>;
}

impl PairScorer for FacetModel {
    fn facet(&self) -> Facet {
        FacetModel::facet(self)
    }

    fn id(&self) -> String {
        format!("{}:{}", self.profile().as_str(), self.tokenizer_id())
    }

    fn score_pool(&self, query: &Paper, candidates: &[&Paper]) -> Result<Vec<f64>, BenchmarkError> {
        let pairs = candidates.iter().map(|c| self.encode(query, c)).collect::<Result<Vec<_>, _>>()?;
        Ok(self.score_batch(&pairs)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub metric: MetricConfig,
    /// Evaluate despite overlapping papers; the report is tainted.
    pub waive_leakage: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            metric: MetricConfig::default(),
            waive_leakage: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRow {
    pub query_id: String,
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QueryRow {
    fn valid(&self) -> bool {
        self.ndcg.is_some() && self.map.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeakageStatus {
    pub checked: bool,
    pub overlap_count: usize,
    pub waived: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub facet: Facet,
    pub scorer: String,
    pub ndcg_percent: f64,
    pub gain: Gain,
    pub map_threshold: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Means {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ndcg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ReportConfig,
    pub leakage: LeakageStatus,
    pub tainted: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub banner: Option<String>,
    pub rows: Vec<QueryRow>,
    pub means: Means,
    pub evaluated: usize,
    pub excluded: usize,
}

impl EvalReport {
    /// Means recomputed from the rows must equal the stored means.
    pub fn verify(&self) -> Result<(), BenchmarkError> {
        let valid: Vec<&QueryRow> = self.rows.iter().filter(|r| r.valid()).collect();
        let ndcg = metrics::mean(&valid.iter().filter_map(|r| r.ndcg).collect::<Vec<_>>());
        let map = metrics::mean(&valid.iter().filter_map(|r| r.map).collect::<Vec<_>>());
        if ndcg != self.means.ndcg || map != self.means.map {
            return Err(BenchmarkError::Inconsistent(format!(
                "rows give ({ndcg:?}, {map:?}), report says ({:?}, {:?})",
                self.means.ndcg, self.means.map
            )));
        }
        if valid.len() != self.evaluated || self.rows.len() - valid.len() != self.excluded {
            return Err(BenchmarkError::Inconsistent("evaluated/excluded counts".into()));
        }
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), BenchmarkError> {
        self.verify()?;
        Ok(io::write_json(path, self)?)
    }
}

/// Scores every query's pool and reports NDCG%k and MAP per query and on
/// average. Queries whose metrics are undefined are listed and excluded
/// from the means.
pub fn evaluate_facet(
    scorer: &dyn PairScorer,
    queries: &[EvalQuery],
    leakage: Option<&LeakageReport>,
    cfg: &EvalConfig,
) -> Result<EvalReport, BenchmarkError> {
    let overlap = leakage.map_or(0, |l| l.overlap.len());
    if overlap > 0 && !cfg.waive_leakage {
        return Err(BenchmarkError::Leakage { count: overlap });
    }
    if leakage.is_none() && !cfg.waive_leakage {
        return Err(BenchmarkError::LeakageUnchecked);
    }
    for q in queries {
        if q.facet != BenchFacet::from(scorer.facet()) {
            return Err(BenchmarkError::FacetMismatch {
                model: scorer.facet().to_string(),
                query: q.facet.to_string(),
            });
        }
    }
    let mut ordered: Vec<&EvalQuery> = queries.iter().collect();
    ordered.sort_by(|a, b| a.query.paper_id.cmp(&b.query.paper_id));
    let rows = ordered
        .par_iter()
        .map(|q| evaluate_query(scorer, q, &cfg.metric))
        .collect::<Result<Vec<_>, _>>()?;
    let valid: Vec<&QueryRow> = rows.iter().filter(|r| r.valid()).collect();
    let means = Means {
        ndcg: metrics::mean(&valid.iter().filter_map(|r| r.ndcg).collect::<Vec<_>>()),
        map: metrics::mean(&valid.iter().filter_map(|r| r.map).collect::<Vec<_>>()),
    };
    let evaluated = valid.len();
    let report = EvalReport {
        config: ReportConfig {
            facet: scorer.facet(),
            scorer: scorer.id(),
            ndcg_percent: cfg.metric.ndcg_percent,
            gain: cfg.metric.gain,
            map_threshold: cfg.metric.map_threshold,
        },
        leakage: LeakageStatus {
            checked: leakage.is_some(),
            overlap_count: overlap,
            waived: cfg.waive_leakage,
        },
        tainted: cfg.waive_leakage,
        banner: cfg.waive_leakage.then(|| TAINT_BANNER.to_string()),
        excluded: rows.len() - evaluated,
        evaluated,
        rows,
        means,
    };
    report.verify()?;
    Ok(report)
}

fn evaluate_query(scorer: &dyn PairScorer, q: &EvalQuery, cfg: &MetricConfig) -> Result<QueryRow, BenchmarkError> {
    let cands: Vec<&Paper> = q.pool.iter().map(|p| &p.paper).collect();
    let scores = scorer.score_pool(&q.query, &cands)?;
    let entries = q
        .pool
        .iter()
        .zip(scores)
        .map(|(p, score)| RankedEntry {
            candidate_id: p.paper.paper_id.clone(),
            score,
            relevance: p.relevance,
        })
        .collect();
    let mut row = QueryRow {
        query_id: q.query.paper_id.clone(),
        candidates: q.pool.len(),
        ndcg: None,
        map: None,
        error: None,
    };
    let metrics_for = |list: &RankedList| -> Result<(f64, f64), MetricError> {
        Ok((
            metrics::ndcg_percent_k(list, cfg.ndcg_percent, cfg.gain)?,
            metrics::mean_average_precision(list, cfg.map_threshold)?,
        ))
    };
    match RankedList::new(q.query.paper_id.clone(), entries).and_then(|l| metrics_for(&l)) {
        Ok((n, m)) => {
            row.ndcg = Some(n);
            row.map = Some(m);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    Ok(row)
}

/// One arm of the label-scale ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub arm: String,
    pub mapping: [u8; 4],
    pub triplet_seeds: usize,
    pub best_epoch: Option<usize>,
    pub validation_metric: Option<f64>,
    pub ndcg_percent_points: Option<f64>,
    pub map: Option<f64>,
    pub evaluated: usize,
    pub excluded: usize,
}

/// Published full-scale numbers, for context only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub ndcg_full_scale: f64,
    pub ndcg_merged_scale: f64,
    pub gating: bool,
    pub note: String,
}

impl Default for ReferenceRow {
    fn default() -> Self {
        Self {
            ndcg_full_scale: REFERENCE_NDCG_FULL_SCALE,
            ndcg_merged_scale: REFERENCE_NDCG_MERGED_SCALE,
            gating: false,
            note: "full-scale reference with a pretrained encoder; not comparable to desk-scale runs".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub facet: Facet,
    pub rng_seed: u64,
    pub train_config_hash: String,
    pub train_config: TrainConfig,
    pub rows: Vec<AblationRow>,
    pub reference: ReferenceRow,
    pub tainted: bool,
}

impl AblationReport {
    pub fn to_markdown(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.2}"));
        let mut s = String::from("| Label scale | NDCG%20 | MAP | Queries |\n|---|---|---|---|\n");
        for r in &self.rows {
            s.push_str(&format!(
                "| {} | {} | {} | {} |\n",
                r.arm,
                fmt(r.ndcg_percent_points),
                fmt(r.map.map(|m| m * 100.0)),
                r.evaluated
            ));
        }
        s.push_str(&format!(
            "| reference 0-3 / 0-2 (non-gating) | {:.2} / {:.2} | | |\n",
            self.reference.ndcg_full_scale, self.reference.ndcg_merged_scale
        ));
        s
    }
}

/// Inputs shared by both ablation arms.
pub struct AblationInputs<'a> {
    pub labels: &'a [LabeledPair],
    pub papers: &'a PaperIndex,
    pub split: &'a SplitSpec,
    pub queries: &'a [EvalQuery],
    pub leakage: Option<&'a LeakageReport>,
    pub eval: &'a EvalConfig,
}

/// Trains one model per merge policy from identical initial models and
/// configs, evaluating each on `queries`.
pub fn ablation_with_policies(
    arms: &[(String, MergePolicy)],
    make_model: &dyn Fn() -> Result<FacetModel, BenchmarkError>,
    cfg: &TrainConfig,
    inputs: &AblationInputs<'_>,
) -> Result<AblationReport, BenchmarkError> {
    let facet = arms.first().map_or(Facet::Method, |(_, p)| p.facet);
    let mut rows = Vec::new();
    for (arm, policy) in arms {
        let triplets = build_triplets(inputs.labels, policy)?;
        let pools = effective_pools(inputs.labels, policy)?;
        let data = TrainingData {
            triplets: &triplets,
            pools: &pools,
            papers: inputs.papers,
            split: inputs.split,
        };
        let outcome = trainer::train(make_model()?, &data, cfg)?;
        let report = evaluate_facet(&outcome.model, inputs.queries, inputs.leakage, inputs.eval)?;
        rows.push(AblationRow {
            arm: arm.clone(),
            mapping: policy.mapping,
            triplet_seeds: triplets.len(),
            best_epoch: outcome.best_epoch,
            validation_metric: outcome.best().map(|c| c.validation_metric),
            ndcg_percent_points: report.means.ndcg.map(|v| v * 100.0),
            map: report.means.map,
            evaluated: report.evaluated,
            excluded: report.excluded,
        });
    }
    Ok(AblationReport {
        facet,
        rng_seed: cfg.rng_seed,
        train_config_hash: cfg.hash(),
        train_config: cfg.clone(),
        rows,
        reference: ReferenceRow::default(),
        tainted: inputs.eval.waive_leakage,
    })
}

/// Method-facet ablation: raw 0-3 grades against the merged 0-2 scale.
pub fn ablation_label_scale(
    make_model: &dyn Fn() -> Result<FacetModel, BenchmarkError>,
    cfg: &TrainConfig,
    inputs: &AblationInputs<'_>,
) -> Result<AblationReport, BenchmarkError> {
    let arms = [LabelScale::Full, LabelScale::Merged].map(|s| {
        (
            s.to_string(),
            MergePolicy::from_scale(Facet::Method, s),
        )
    });
    ablation_with_policies(&arms, make_model, cfg, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scores candidates by a lookup table; unknown ids score 0.
    struct TableScorer {
        facet: Facet,
        scores: HashMap<String, f64>,
    }

    impl PairScorer for TableScorer {
        fn facet(&self) -> Facet {
            self.facet
        }

        fn id(&self) -> String {
            "table".into()
        }

        fn score_pool(&self, _: &Paper, candidates: &[&Paper]) -> Result<Vec<f64>, BenchmarkError> {
            Ok(candidates.iter().map(|c| self.scores.get(&c.paper_id).copied().unwrap_or(0.0)).collect())
        }
    }

    fn query(id: &str, facet: BenchFacet, grades: &[(&str, u8)]) -> EvalQuery {
        EvalQuery {
            query: Paper::new(id, "t", "a"),
            facet,
            pool: grades
                .iter()
                .map(|(c, g)| PoolItem {
                    paper: Paper::new(*c, "t", "a"),
                    relevance: *g,
                })
                .collect(),
        }
    }

    #[test]
    fn leakage_is_symmetric_and_lists_overlap() {
        let a = ["p1", "p2", "p3"];
        let b = ["p3", "p4"];
        assert_eq!(check_leakage(a, b).overlap, vec!["p3"]);
        assert_eq!(check_leakage(b, a).overlap, check_leakage(a, b).overlap);
        assert!(check_leakage(["x"], ["y"]).is_clean());
        assert_eq!(check_leakage(a, a).overlap.len(), 3);
    }

    #[test]
    fn gold_scores_give_perfect_ndcg() {
        let q = query("q", BenchFacet::Method, &[("a", 0), ("b", 3), ("c", 1), ("d", 2), ("e", 0)]);
        let scorer = TableScorer {
            facet: Facet::Method,
            scores: q.pool.iter().map(|p| (p.paper.paper_id.clone(), p.relevance as f64)).collect(),
        };
        let clean = LeakageReport::default();
        let r = evaluate_facet(&scorer, &[q], Some(&clean), &EvalConfig::default()).unwrap();
        assert_eq!(r.rows[0].ndcg, Some(1.0));
        assert!(!r.tainted && r.banner.is_none());
        r.verify().unwrap();
    }

    #[test]
    fn constant_scores_rank_by_id() {
        let q = query("q", BenchFacet::Background, &[("c", 3), ("a", 0), ("b", 2)]);
        let scorer = TableScorer {
            facet: Facet::Background,
            scores: HashMap::new(),
        };
        let r = evaluate_facet(&scorer, &[q], Some(&LeakageReport::default()), &EvalConfig::default()).unwrap();
        // Order a, b, c; cutoff round(0.6) = 1 keeps only `a` (grade 0).
        assert_eq!(r.rows[0].ndcg, Some(0.0));
        // Relevant (>= 2): b at rank 2, c at rank 3.
        assert!((r.rows[0].map.unwrap() - (0.5 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn leakage_gates_and_waiver_taints() {
        let q = query("q", BenchFacet::Method, &[("a", 1), ("b", 2)]);
        let scorer = TableScorer {
            facet: Facet::Method,
            scores: HashMap::new(),
        };
        let dirty = check_leakage(["a"], ["a", "b", "q"]);
        assert!(matches!(
            evaluate_facet(&scorer, std::slice::from_ref(&q), Some(&dirty), &EvalConfig::default()),
            Err(BenchmarkError::Leakage { count: 1 })
        ));
        let waived = EvalConfig {
            waive_leakage: true,
            ..Default::default()
        };
        let r = evaluate_facet(&scorer, &[q], Some(&dirty), &waived).unwrap();
        assert!(r.tainted);
        assert_eq!(r.banner.as_deref(), Some(TAINT_BANNER));
    }

    #[test]
    fn undefined_metrics_are_excluded_from_means() {
        let good = query("q1", BenchFacet::Method, &[("a", 3), ("b", 0)]);
        let none_relevant = query("q2", BenchFacet::Method, &[("c", 0), ("d", 0)]);
        let scorer = TableScorer {
            facet: Facet::Method,
            scores: [("a".to_string(), 1.0)].into(),
        };
        let r = evaluate_facet(&scorer, &[none_relevant, good], Some(&LeakageReport::default()), &EvalConfig::default()).unwrap();
        assert_eq!((r.evaluated, r.excluded), (1, 1));
        assert_eq!(r.rows[0].query_id, "q1");
        assert!(r.rows[1].error.is_some());
        assert_eq!(r.means.ndcg, Some(1.0));
        let mut broken = r.clone();
        broken.means.ndcg = Some(0.5);
        assert!(broken.verify().is_err());
    }

    #[test]
    fn facet_mismatch_is_rejected() {
        let q = query("q", BenchFacet::Background, &[("a", 1)]);
        let scorer = TableScorer {
            facet: Facet::Method,
            scores: HashMap::new(),
        };
        assert!(matches!(
            evaluate_facet(&scorer, &[q], Some(&LeakageReport::default()), &EvalConfig::default()),
            Err(BenchmarkError::FacetMismatch { .. })
        ));
    }

    #[test]
    fn sanitize_reports_rejections() {
        let mut q = query("q", BenchFacet::Method, &[("a", 1), ("q", 2), ("b", 7)]);
        q.pool.push(PoolItem {
            paper: Paper::new("c", "title", ""),
            relevance: 1,
        });
        let empty = query("z", BenchFacet::Method, &[("z", 1)]);
        let mut rejections = Vec::new();
        let out = sanitize(vec![q, empty], &mut rejections);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].pool.len(), 1);
        let reasons: Vec<&str> = rejections.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(
            reasons,
            ["query appears in its own pool", "relevance outside 0-3", "missing title or abstract", "query appears in its own pool", "empty pool"]
        );
    }

    #[test]
    fn csfcube_layout_is_adapted() {
        let dir = tempfile::tempdir().unwrap();
        let abstracts = [
            r#"{"paper_id": "q1", "title": "Query one", "abstract": ["First sentence.", "Second."]}"#,
            r#"{"paper_id": "c1", "title": "Cand one", "abstract": ["Text."]}"#,
            r#"{"paper_id": "c2", "title": "Cand two", "abstract": []}"#,
        ];
        std::fs::write(dir.path().join(CSFCUBE_ABSTRACTS), abstracts.join("\n")).unwrap();
        std::fs::write(
            dir.path().join("test-pid2anns-csfcube-method.json"),
            r#"{"q1_method": {"cands": ["c1", "c2", "c9"], "relevance_adju": [2, 1, 3]}}"#,
        )
        .unwrap();
        let loaded = load_benchmark(dir.path(), BenchFacet::Method).unwrap();
        assert_eq!(loaded.queries.len(), 1);
        let q = &loaded.queries[0];
        assert_eq!(q.query.abstract_text, "First sentence. Second.");
        assert_eq!(q.pool.len(), 1);
        assert_eq!(q.pool[0].relevance, 2);
        assert_eq!(loaded.rejections.len(), 2);
        assert!(matches!(load_benchmark(dir.path(), BenchFacet::Background), Err(BenchmarkError::Io(_))));
        assert!(matches!("novelty".parse::<BenchFacet>(), Err(BenchmarkError::UnknownFacet(_))));
    }
}
