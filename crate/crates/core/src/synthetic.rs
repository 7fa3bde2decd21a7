//! Synthetic corpus with independently controlled facets.
//!
//! Every document carries one topic word and one method word inside a
//! templated title and abstract. Background grades depend only on topics
//! and Method grades only on methods:
//!
//! | relation            | grade |
//! |---------------------|-------|
//! | same word           | 3     |
//! | same family (pair)  | 1     |
//! | otherwise           | 0     |
//!
//! Topics `2k` and `2k + 1` form a family, likewise methods.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::annotator::{build_prompt, render_annotation, AnnotatorMeta, FacetLabel, LabeledPair, ReplayClient, ReplayEntry};
use crate::benchmark::{EvalQuery, PoolItem, QUERIES_FILE};
use crate::io::IoError;
use crate::corpus::{CandidatePool, Paper, Provenance};
use crate::facet::Facet;

pub const TOPICS: [&str; 10] = [
    "protein", "galaxy", "traffic", "speech", "climate", "market", "genome", "robot", "fraud", "retina",
];
pub const METHODS: [&str; 10] = [
    "transformer", "bayesian", "kernel", "genetic", "montecarlo", "regression", "clustering", "reinforcement",
    "wavelet", "graphical",
];
const FILLER: [&str; 24] = [
    "novel", "robust", "efficient", "scalable", "accurate", "simple", "strong", "consistent", "extensive", "careful",
    "large", "modest", "clear", "broad", "new", "practical", "general", "fast", "deep", "sparse", "stable", "rich",
    "useful", "solid",
];
const ABSTRACT_TEMPLATES: [&str; 4] = [
    "we address {t} with a {m} approach and report {f} {f} results",
    "this {f} work applies {m} to {t} and shows {f} gains",
    "a {m} model for {t} is proposed with {f} {f} evaluation",
    "for {t} we design a {f} {m} pipeline with {f} accuracy",
];
const TITLE_TEMPLATES: [&str; 3] = ["{m} for {t}", "{f} {t} via {m}", "{t} with {f} {m}"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub documents: usize,
    pub seeds: usize,
    pub pool_size: usize,
    pub rng_seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            documents: 200,
            seeds: 200,
            pool_size: 12,
            rng_seed: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDoc {
    pub paper: Paper,
    pub topic: usize,
    pub method: usize,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub docs: Vec<SyntheticDoc>,
    pub pools: Vec<CandidatePool>,
    pub labels: Vec<LabeledPair>,
}

impl SyntheticCorpus {
    pub fn papers(&self) -> Vec<Paper> {
        self.docs.iter().map(|d| d.paper.clone()).collect()
    }
}

fn family(i: usize) -> usize {
    i / 2
}

fn relation_grade(a: usize, b: usize) -> u8 {
    if a == b {
        3
    } else if family(a) == family(b) {
        1
    } else {
        0
    }
}

/// Grade of `candidate` for `seed` on `facet`.
pub fn grade(seed: &SyntheticDoc, candidate: &SyntheticDoc, facet: Facet) -> u8 {
    match facet {
        Facet::Background => relation_grade(seed.topic, candidate.topic),
        Facet::Method => relation_grade(seed.method, candidate.method),
    }
}

fn fill(template: &str, topic: usize, method: usize, rng: &mut impl Rng) -> String {
    template
        .split(' ')
        .map(|w| match w {
            "{t}" => TOPICS[topic].to_string(),
            "{m}" => METHODS[method].to_string(),
            "{f}" => FILLER.choose(rng).expect("non-empty").to_string(),
            other => other.to_string(),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One templated document.
pub fn make_doc(id: impl Into<String>, topic: usize, method: usize, rng: &mut impl Rng) -> SyntheticDoc {
    let title = fill(TITLE_TEMPLATES.choose(rng).expect("non-empty"), topic, method, rng);
    let abstract_text = fill(ABSTRACT_TEMPLATES.choose(rng).expect("non-empty"), topic, method, rng);
    SyntheticDoc {
        paper: Paper::new(id, title, abstract_text),
        topic,
        method,
    }
}

fn label(seed: &SyntheticDoc, cand: &SyntheticDoc) -> LabeledPair {
    let bg = grade(seed, cand, Facet::Background);
    let mt = grade(seed, cand, Facet::Method);
    LabeledPair {
        seed_id: seed.paper.paper_id.clone(),
        candidate_id: cand.paper.paper_id.clone(),
        background: FacetLabel {
            facet: Facet::Background,
            score: bg,
            reason: format!("topic relation grade {bg}"),
        },
        method: FacetLabel {
            facet: Facet::Method,
            score: mt,
            reason: format!("method relation grade {mt}"),
        },
        annotator_meta: AnnotatorMeta {
            model: "synthetic-oracle".into(),
            temperature: 0.0,
            prompt_hash: String::new(),
            timestamp: String::new(),
        },
    }
}

/// Documents cycle through all topic/method combinations; the first
/// `seeds` documents (by default all of them) are seeds. Each pool mixes the seed's twin, same-topic,
/// same-method, same-family and unrelated documents.
pub fn generate(cfg: &SyntheticConfig) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let combos = TOPICS.len() * METHODS.len();
    let docs: Vec<SyntheticDoc> = (0..cfg.documents)
        .map(|d| {
            let c = d % combos;
            make_doc(format!("syn-{d:04}"), c / METHODS.len(), c % METHODS.len(), &mut rng)
        })
        .collect();

    let mut pools = Vec::new();
    let mut labels = Vec::new();
    for s in 0..cfg.seeds.min(docs.len()) {
        let seed = &docs[s];
        let others: Vec<usize> = (0..docs.len()).filter(|&i| i != s).collect();
        let pick = |pred: &dyn Fn(&SyntheticDoc) -> bool, k: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
            let matching: Vec<usize> = others.iter().copied().filter(|&i| pred(&docs[i])).collect();
            matching.choose_multiple(rng, k).copied().collect()
        };
        let mut chosen: Vec<usize> = Vec::new();
        let quotas: [(Box<dyn Fn(&SyntheticDoc) -> bool>, usize); 6] = [
            (Box::new(|d: &SyntheticDoc| d.topic == seed.topic && d.method == seed.method), 1),
            (Box::new(|d: &SyntheticDoc| d.topic == seed.topic && d.method != seed.method), 3),
            (Box::new(|d: &SyntheticDoc| d.method == seed.method && d.topic != seed.topic), 3),
            (Box::new(|d: &SyntheticDoc| d.topic != seed.topic && family(d.topic) == family(seed.topic)), 2),
            (Box::new(|d: &SyntheticDoc| d.method != seed.method && family(d.method) == family(seed.method)), 1),
            (Box::new(|_: &SyntheticDoc| true), cfg.pool_size),
        ];
        for (pred, k) in quotas.iter() {
            for i in pick(pred.as_ref(), *k, &mut rng) {
                if chosen.len() < cfg.pool_size && !chosen.contains(&i) {
                    chosen.push(i);
                }
            }
        }
        chosen.shuffle(&mut rng);
        let candidates: Vec<Paper> = chosen.iter().map(|&i| docs[i].paper.clone()).collect();
        labels.extend(chosen.iter().map(|&i| label(seed, &docs[i])));
        pools.push(CandidatePool {
            seed: seed.paper.clone(),
            candidates,
            provenance: Provenance {
                source: "synthetic".into(),
                retrieved_at: 0,
            },
        });
    }
    SyntheticCorpus { docs, pools, labels }
}

/// A seed with one same-topic/different-method candidate and one
/// different-topic/same-method candidate.
#[derive(Debug, Clone)]
pub struct Probe {
    pub seed: SyntheticDoc,
    pub same_topic: SyntheticDoc,
    pub same_method: SyntheticDoc,
}

/// Fresh probe documents; topic and method pairs are drawn from different
/// families so the decoy shares nothing on the facet it should lose on.
pub fn probes(n: usize, rng_seed: u64) -> Vec<Probe> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    (0..n)
        .map(|i| {
            let t = rng.random_range(0..TOPICS.len());
            let m = rng.random_range(0..METHODS.len());
            let other = |x: usize, len: usize, rng: &mut ChaCha8Rng| loop {
                let y = rng.random_range(0..len);
                if family(y) != family(x) {
                    break y;
                }
            };
            let t2 = other(t, TOPICS.len(), &mut rng);
            let m2 = other(m, METHODS.len(), &mut rng);
            Probe {
                seed: make_doc(format!("probe-{i:03}-s"), t, m, &mut rng),
                same_topic: make_doc(format!("probe-{i:03}-a"), t, m2, &mut rng),
                same_method: make_doc(format!("probe-{i:03}-b"), t2, m, &mut rng),
            }
        })
        .collect()
}

/// Shape of the end-to-end pipeline fixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub corpus: SyntheticConfig,
    pub bench_queries: usize,
    pub bench_pool: usize,
    pub bench_rng_seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            corpus: SyntheticConfig {
                documents: 120,
                seeds: 40,
                pool_size: 12,
                rng_seed: 7,
            },
            bench_queries: 6,
            bench_pool: 10,
            bench_rng_seed: 2024,
        }
    }
}

/// Benchmark queries over fresh `bench-` documents, graded on both facets.
/// Pools hold one same-topic and one same-method candidate at least.
pub fn bench_queries(cfg: &FixtureConfig) -> Vec<EvalQuery> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.bench_rng_seed);
    let mut out = Vec::new();
    for q in 0..cfg.bench_queries {
        let topic = rng.random_range(0..TOPICS.len());
        let method = rng.random_range(0..METHODS.len());
        let query = make_doc(format!("bench-q{q:02}"), topic, method, &mut rng);
        let cands: Vec<SyntheticDoc> = (0..cfg.bench_pool)
            .map(|c| {
                let (t, m) = match c {
                    0 => (topic, rng.random_range(0..METHODS.len())),
                    1 => (rng.random_range(0..TOPICS.len()), method),
                    _ => (rng.random_range(0..TOPICS.len()), rng.random_range(0..METHODS.len())),
                };
                make_doc(format!("bench-q{q:02}-c{c:02}"), t, m, &mut rng)
            })
            .collect();
        for facet in Facet::ALL {
            out.push(EvalQuery {
                query: query.paper.clone(),
                facet: facet.into(),
                pool: cands
                    .iter()
                    .map(|c| PoolItem {
                        paper: c.paper.clone(),
                        relevance: grade(&query, c, facet),
                    })
                    .collect(),
            });
        }
    }
    out
}

/// Recorded annotator replies reproducing `labels` exactly.
pub fn replay_entries(corpus: &SyntheticCorpus) -> Vec<ReplayEntry> {
    let papers: HashMap<&str, &Paper> = corpus.docs.iter().map(|d| (d.paper.paper_id.as_str(), &d.paper)).collect();
    corpus
        .labels
        .iter()
        .map(|l| {
            let prompt = build_prompt(papers[l.seed_id.as_str()], papers[l.candidate_id.as_str()]);
            ReplayEntry {
                key: ReplayClient::key_for(&prompt.user),
                response: render_annotation(&l.background, &l.method),
            }
        })
        .collect()
}

pub const FIXTURE_CONFIG: &str = "pipeline.toml";

/// Writes `papers.jsonl`, `pools.jsonl`, `replay.jsonl`,
/// `benchmark/queries.jsonl` and a `pipeline.toml` running every stage
/// offline. `agreement_dir` holds the human/LLM validation sample.
pub fn write_pipeline_fixture(dir: &Path, cfg: &FixtureConfig, agreement_dir: &str) -> Result<(), IoError> {
    let corpus = generate(&cfg.corpus);
    crate::io::write_jsonl(&dir.join("papers.jsonl"), &corpus.papers())?;
    crate::io::write_jsonl(&dir.join("pools.jsonl"), corpus.pools.iter().map(CandidatePool::to_record).collect::<Vec<_>>().iter())?;
    crate::io::write_jsonl(&dir.join("replay.jsonl"), &replay_entries(&corpus))?;
    crate::io::write_jsonl(&dir.join("benchmark").join(QUERIES_FILE), &bench_queries(cfg))?;
    let toml = format!(
        r#"rng_seed = 42
out_dir = "run"

[corpus]
papers = "papers.jsonl"
pools = "pools.jsonl"

[annotate]
replay = "replay.jsonl"
fixed_timestamp = "2024-01-01T00:00:00Z"
parallelism = 1
requests_per_second = 0.0

[agreement]
human = "{agreement_dir}/human_labels.jsonl"
llm = "{agreement_dir}/llm_labels.jsonl"

[triplets]
split_fractions = [0.8, 0.1, 0.1]
method_scale = "0-2"

[train]
backbone = "compact"
max_tokens = 64
epochs = 3

[bench]
benchmark = "benchmark"
ablation = true
"#
    );
    let path = dir.join(FIXTURE_CONFIG);
    std::fs::write(&path, toml).map_err(|e| IoError::io(&path, e))
}

/// Every word the generator can emit, for building a vocabulary.
pub fn vocabulary_texts() -> Vec<String> {
    let mut words: BTreeSet<String> = BTreeSet::new();
    for t in ABSTRACT_TEMPLATES.iter().chain(TITLE_TEMPLATES.iter()) {
        words.extend(t.split(' ').filter(|w| !w.starts_with('{')).map(String::from));
    }
    words.extend(TOPICS.iter().chain(METHODS.iter()).chain(FILLER.iter()).map(|w| w.to_string()));
    words.into_iter().collect()
}
