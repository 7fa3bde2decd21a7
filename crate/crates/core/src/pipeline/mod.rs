//! Stage runner wiring corpus ingestion through benchmark evaluation.
//!
//! Every stage reads its inputs from the previous stage's output directory
//! under `out_dir`, writes its own outputs, and records a
//! [`manifest::StageManifest`] in `out_dir/manifests/`. A stage whose
//! config and input hashes match its manifest, and whose outputs are
//! unchanged on disk, is skipped unless forced.
//!
//! ```text
//! out_dir/
//!   corpus/     papers.jsonl pools.jsonl rejections.jsonl stats.json
//!   labels/     labels.jsonl errors.jsonl
//!   agreement/  distribution.json [report.json report.md disagreements.csv]
//!   triplets/   background.jsonl method.jsonl split.json
//!   checkpoints/{background,method}/
//!   reports/    leakage.json bench-{background,method}.json [ablation.json ablation.md] summary.json
//!   manifests/  <stage>.json
//! ```

pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use self::config::{BackboneChoice, ConfigError, PipelineConfig};
use self::manifest::{hash_paths, StageManifest};
use crate::agreement::{self, AgreementError};
use crate::annotator::{
    annotate_corpus, read_labels, write_errors, write_labels, ChatClient, Clock, FixedClock, LabelCache,
    LabeledPair, ReplayClient, SystemClock,
};
use crate::benchmark::{
    ablation_label_scale, check_leakage, evaluate_facet, load_benchmark, AblationInputs, BenchmarkError, EvalConfig,
    EvalReport, LeakageReport,
};
use crate::corpus::{self, index_papers, CorpusError, IngestOptions, Paper, PaperIndex};
use crate::encoder::checkpoint::{self, CheckpointError, CreationMetadata};
use crate::encoder::pretrained::{self, PretrainedError};
use crate::encoder::{EncoderError, FacetModel, HeadInit, Tokenizer, HEAD_INIT_SCALE};
use crate::facet::Facet;
use crate::io::{self, sha256_hex, sha256_path, IoError};
use crate::trainer::{self, TrainError, TrainingData};
use crate::triplets::{self, build_triplets, effective_pools, MergePolicy, SplitSpec, TripletError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("missing {path}; run `pipeline run {stage}` first")]
    MissingUpstream { path: PathBuf, stage: Stage },
    #[error("missing input {0}")]
    MissingInput(PathBuf),
    #[error("{0}")]
    NotConfigured(String),
    #[error("unknown stage `{0}`")]
    UnknownStage(String),
    #[error("annotation failed: {0}")]
    Annotation(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Agreement(#[from] AgreementError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Pretrained(#[from] PretrainedError),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Corpus,
    Annotate,
    Agreement,
    Triplets,
    Train,
    Bench,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Corpus,
        Stage::Annotate,
        Stage::Agreement,
        Stage::Triplets,
        Stage::Train,
        Stage::Bench,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Annotate => "annotate",
            Stage::Agreement => "agreement",
            Stage::Triplets => "triplets",
            Stage::Train => "train",
            Stage::Bench => "bench",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Stage {
    type Err = PipelineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| PipelineError::UnknownStage(s.to_string()))
    }
}

/// Output locations derived from `out_dir`.
#[derive(Debug, Clone)]
pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn papers(&self) -> PathBuf {
        self.root.join("corpus/papers.jsonl")
    }
    pub fn pools(&self) -> PathBuf {
        self.root.join("corpus/pools.jsonl")
    }
    pub fn corpus_rejections(&self) -> PathBuf {
        self.root.join("corpus/rejections.jsonl")
    }
    pub fn corpus_stats(&self) -> PathBuf {
        self.root.join("corpus/stats.json")
    }
    pub fn labels(&self) -> PathBuf {
        self.root.join("labels/labels.jsonl")
    }
    pub fn label_errors(&self) -> PathBuf {
        self.root.join("labels/errors.jsonl")
    }
    pub fn label_cache(&self) -> PathBuf {
        self.root.join("labels/cache/labels.cache.jsonl")
    }
    pub fn agreement_dir(&self) -> PathBuf {
        self.root.join("agreement")
    }
    pub fn triplets(&self, facet: Facet) -> PathBuf {
        self.root.join(format!("triplets/{}.jsonl", facet.as_str()))
    }
    pub fn split(&self) -> PathBuf {
        self.root.join("triplets/split.json")
    }
    pub fn checkpoint(&self, facet: Facet) -> PathBuf {
        self.root.join(format!("checkpoints/{}", facet.as_str()))
    }
    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
    pub fn bench_report(&self, facet: Facet) -> PathBuf {
        self.reports().join(format!("bench-{}.json", facet.as_str()))
    }
    pub fn leakage(&self) -> PathBuf {
        self.reports().join("leakage.json")
    }
    pub fn ablation(&self) -> PathBuf {
        self.reports().join("ablation.json")
    }
    pub fn summary(&self) -> PathBuf {
        self.reports().join("summary.json")
    }
    pub fn manifest(&self, stage: Stage) -> PathBuf {
        self.root.join(format!("manifests/{stage}.json"))
    }
}

/// Result of one stage invocation.
#[derive(Debug, Clone, PartialEq)]
pub struct StageRun {
    pub stage: Stage,
    pub skipped: bool,
    pub manifest: StageManifest,
}

/// Hashes of the final reports; identical across runs of the same config.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub reports: BTreeMap<String, String>,
}

pub struct Pipeline {
    cfg: PipelineConfig,
    paths: Paths,
    clock: Option<Box<dyn Clock>>,
    client: Option<Box<dyn ChatClient>>,
}

fn require(path: PathBuf, stage: Stage) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path)
    } else {
        Err(PipelineError::MissingUpstream { path, stage })
    }
}

fn require_input(path: &Path) -> Result<PathBuf, PipelineError> {
    if path.exists() {
        Ok(path.to_path_buf())
    } else {
        Err(PipelineError::MissingInput(path.to_path_buf()))
    }
}

fn hash_json<T: Serialize>(value: &T) -> String {
    sha256_hex(serde_json::to_string(value).expect("config serializes").as_bytes())
}

fn merge_policy(cfg: &PipelineConfig, facet: Facet) -> MergePolicy {
    match facet {
        Facet::Background => MergePolicy::default_for(facet),
        Facet::Method => MergePolicy::from_scale(facet, cfg.triplets.method_scale),
    }
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Self {
        let paths = Paths::new(&cfg.out_dir);
        Self {
            cfg,
            paths,
            clock: None,
            client: None,
        }
    }

    /// Overrides the annotation clock.
    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = Some(clock);
        self
    }

    /// Overrides the chat client used by the annotate stage.
    pub fn with_client(mut self, client: Box<dyn ChatClient>) -> Self {
        self.client = Some(client);
        self
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn paths(&self) -> &Paths {
        &self.paths
    }

    /// Input paths of `stage`; fails if an upstream artifact is missing.
    pub fn stage_inputs(&self, stage: Stage) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let c = &self.cfg;
        let mut inputs = Vec::new();
        match stage {
            Stage::Corpus => {
                inputs.push(require_input(&c.corpus.papers)?);
                inputs.push(require_input(&c.corpus.pools)?);
            }
            Stage::Annotate => {
                inputs.push(require(p.papers(), Stage::Corpus)?);
                inputs.push(require(p.pools(), Stage::Corpus)?);
                if let Some(r) = &c.annotate.replay {
                    inputs.push(require_input(r)?);
                }
            }
            Stage::Agreement => {
                inputs.push(require(p.labels(), Stage::Annotate)?);
                for f in [&c.agreement.human, &c.agreement.llm].into_iter().flatten() {
                    inputs.push(require_input(f)?);
                }
            }
            Stage::Triplets => inputs.push(require(p.labels(), Stage::Annotate)?),
            Stage::Train => {
                inputs.push(require(p.papers(), Stage::Corpus)?);
                inputs.push(require(p.labels(), Stage::Annotate)?);
                for f in Facet::ALL {
                    inputs.push(require(p.triplets(f), Stage::Triplets)?);
                }
                inputs.push(require(p.split(), Stage::Triplets)?);
                if let Some(d) = &c.train.pretrained_dir {
                    inputs.push(require_input(d)?);
                }
            }
            Stage::Bench => {
                inputs.push(require(p.papers(), Stage::Corpus)?);
                inputs.push(require(p.labels(), Stage::Annotate)?);
                inputs.push(require(p.split(), Stage::Triplets)?);
                for f in Facet::ALL {
                    inputs.push(require(p.checkpoint(f), Stage::Train)?);
                }
                let bench = c
                    .bench
                    .benchmark
                    .as_ref()
                    .ok_or_else(|| PipelineError::NotConfigured("bench.benchmark is not set".into()))?;
                inputs.push(require_input(bench)?);
                if let Some(d) = &c.train.pretrained_dir {
                    inputs.push(require_input(d)?);
                }
            }
        }
        Ok(inputs)
    }

    /// Hash of the config blocks that influence `stage`.
    pub fn stage_config_hash(&self, stage: Stage) -> String {
        let c = &self.cfg;
        match stage {
            Stage::Corpus => hash_json(&c.corpus.min_abstract_chars),
            Stage::Annotate => hash_json(&(&c.annotate.annotator.model, c.annotate.annotator.temperature, &c.annotate.fixed_timestamp)),
            Stage::Agreement => hash_json(&c.agreement.disagreement_threshold),
            Stage::Triplets => hash_json(&(c.rng_seed, &c.triplets)),
            Stage::Train => hash_json(&(c.rng_seed, &c.triplets.method_scale, &c.train)),
            Stage::Bench => hash_json(&(c.rng_seed, &c.triplets.method_scale, &c.train, &c.bench)),
        }
    }

    /// Runs one stage unless its manifest shows it is up to date.
    pub fn run_stage(&self, stage: Stage, force: bool) -> Result<StageRun, PipelineError> {
        let inputs = hash_paths(&self.stage_inputs(stage)?)?;
        let config_hash = self.stage_config_hash(stage);
        let manifest_path = self.paths.manifest(stage);
        if !force {
            if let Ok(m) = StageManifest::read(&manifest_path) {
                if m.is_current(&config_hash, &inputs) {
                    tracing::info!(%stage, "up to date; skipped");
                    return Ok(StageRun {
                        stage,
                        skipped: true,
                        manifest: m,
                    });
                }
            }
        }
        let start = Instant::now();
        tracing::info!(%stage, "running");
        let outputs = match stage {
            Stage::Corpus => self.corpus()?,
            Stage::Annotate => self.annotate()?,
            Stage::Agreement => self.agreement()?,
            Stage::Triplets => self.triplets()?,
            Stage::Train => self.train()?,
            Stage::Bench => self.bench()?,
        };
        let manifest = StageManifest {
            stage,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            inputs,
            outputs: hash_paths(&outputs)?,
            duration_ms: start.elapsed().as_millis(),
        };
        manifest.write(&manifest_path)?;
        Ok(StageRun {
            stage,
            skipped: false,
            manifest,
        })
    }

    /// Runs every stage in order and returns the final report hashes.
    pub fn run_all(&self, force: bool) -> Result<(Vec<StageRun>, RunSummary), PipelineError> {
        let runs = Stage::ALL
            .into_iter()
            .map(|s| self.run_stage(s, force))
            .collect::<Result<Vec<_>, _>>()?;
        let summary = io::read_json(&self.paths.summary())?;
        Ok((runs, summary))
    }

    fn load_papers(&self) -> Result<(Vec<Paper>, PaperIndex), PipelineError> {
        let papers = corpus::ingest_jsonl(&self.paths.papers())?.papers;
        let index = index_papers(&papers);
        Ok((papers, index))
    }

    fn corpus(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let opts = IngestOptions {
            min_abstract_chars: self.cfg.corpus.min_abstract_chars,
        };
        let ingested = corpus::ingest_jsonl_with(&self.cfg.corpus.papers, &opts)?;
        let index = index_papers(&ingested.papers);
        let pools = corpus::read_pools(&self.cfg.corpus.pools, &index)?;
        let stats = corpus::corpus_stats(&pools)?;
        corpus::write_papers(&p.papers(), &ingested.papers)?;
        corpus::write_pools(&p.pools(), &pools)?;
        io::write_jsonl(&p.corpus_rejections(), &ingested.rejections)?;
        io::write_json(&p.corpus_stats(), &stats)?;
        Ok(vec![p.papers(), p.pools(), p.corpus_rejections(), p.corpus_stats()])
    }

    fn annotate(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let a = &self.cfg.annotate;
        let (_, index) = self.load_papers()?;
        let pools = corpus::read_pools(&p.pools(), &index)?;
        let fixed;
        let system = SystemClock;
        let clock: &dyn Clock = match (&self.clock, &a.fixed_timestamp) {
            (Some(c), _) => c.as_ref(),
            (None, Some(ts)) => {
                fixed = FixedClock(ts.clone());
                &fixed
            }
            (None, None) => &system,
        };
        let replay;
        #[cfg(feature = "http")]
        let http;
        let client: &dyn ChatClient = match (&self.client, &a.replay) {
            (Some(c), _) => c.as_ref(),
            (None, Some(path)) => {
                replay = ReplayClient::load(path)?;
                &replay
            }
            #[cfg(feature = "http")]
            (None, None) => {
                http = crate::annotator::client::OpenAiClient::from_env(a.api_base.clone())
                    .map_err(|e| PipelineError::Annotation(e.to_string()))?;
                &http
            }
            #[cfg(not(feature = "http"))]
            (None, None) => {
                return Err(PipelineError::NotConfigured(
                    "annotate.replay is not set and the http feature is disabled".into(),
                ))
            }
        };
        let cache = LabelCache::open(&p.label_cache())?;
        let run = annotate_corpus(&pools, client, &a.annotator, &cache, clock);
        write_labels(&p.labels(), &run.labels)?;
        write_errors(&p.label_errors(), &run.errors)?;
        if run.labels.is_empty() {
            return Err(PipelineError::Annotation(format!(
                "no pair was annotated ({} failures, see {})",
                run.errors.len(),
                p.label_errors().display()
            )));
        }
        Ok(vec![p.labels(), p.label_errors()])
    }

    fn agreement(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let dir = p.agreement_dir();
        let labels = read_labels(&p.labels())?;
        let distribution = agreement::score_distribution(&labels)?;
        let dist_path = dir.join("distribution.json");
        io::write_json(&dist_path, &distribution)?;
        let mut outputs = vec![dist_path];
        if let Some(human_path) = &self.cfg.agreement.human {
            let human = agreement::read_any_scores(human_path)?;
            let llm = match &self.cfg.agreement.llm {
                Some(path) => agreement::read_any_scores(path)?,
                None => agreement::read_any_scores(&p.labels())?,
            };
            let (human, llm) = align_scores(human, llm);
            let report = agreement::agreement_report(&human, &llm, self.cfg.agreement.disagreement_threshold)?;
            let files = [
                (dir.join("report.json"), serde_json::to_string_pretty(&report).expect("report serializes")),
                (dir.join("report.md"), report.to_markdown()),
                (dir.join("disagreements.csv"), report.disagreements_csv()),
            ];
            for (path, text) in files {
                fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
                outputs.push(path);
            }
        }
        Ok(outputs)
    }

    fn triplets(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let labels = read_labels(&p.labels())?;
        let mut seeds: Vec<&str> = labels.iter().map(|l| l.seed_id.as_str()).collect();
        seeds.dedup();
        let split = triplets::split_by_seed(&seeds, self.cfg.triplets.split_fractions, self.cfg.rng_seed)?;
        split.write(&p.split())?;
        let mut outputs = Vec::new();
        for facet in Facet::ALL {
            let by_seed = build_triplets(&labels, &merge_policy(&self.cfg, facet))?;
            triplets::write_triplets(&p.triplets(facet), &by_seed)?;
            outputs.push(p.triplets(facet));
        }
        outputs.push(p.split());
        Ok(outputs)
    }

    /// An untrained model for `facet` as configured.
    pub fn initial_model(&self, facet: Facet, papers: &[Paper]) -> Result<FacetModel, PipelineError> {
        initial_model(&self.cfg, facet, papers)
    }

    fn train(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let (papers, index) = self.load_papers()?;
        let labels = read_labels(&p.labels())?;
        let split = SplitSpec::read(&p.split())?;
        let mut outputs = Vec::new();
        for facet in Facet::ALL {
            let triplets = triplets::read_triplets(&p.triplets(facet))?;
            let model = self.initial_model(facet, &papers)?;
            train_and_save(&self.cfg, model, &labels, &triplets, &index, &split, &p.checkpoint(facet))?;
            outputs.push(p.checkpoint(facet));
        }
        Ok(outputs)
    }

    fn bench(&self) -> Result<Vec<PathBuf>, PipelineError> {
        let p = &self.paths;
        let bench_path = self
            .cfg
            .bench
            .benchmark
            .as_ref()
            .ok_or_else(|| PipelineError::NotConfigured("bench.benchmark is not set".into()))?;
        let (papers, index) = self.load_papers()?;
        let eval = EvalConfig {
            metric: self.cfg.bench.metric.clone(),
            waive_leakage: self.cfg.bench.waive_leakage,
        };

        let mut loaded = BTreeMap::new();
        let mut bench_ids = std::collections::BTreeSet::new();
        for facet in Facet::ALL {
            let b = load_benchmark(bench_path, facet.into())?;
            bench_ids.extend(b.paper_ids());
            loaded.insert(facet, b);
        }
        let leakage = check_leakage(papers.iter().map(|p| p.paper_id.as_str()), bench_ids);
        io::write_json(&p.leakage(), &leakage)?;
        let mut outputs = vec![p.leakage()];

        for facet in Facet::ALL {
            let (model, _) = checkpoint::load(&p.checkpoint(facet))?;
            let report = evaluate_facet(&model, &loaded[&facet].queries, Some(&leakage), &eval)?;
            report.write(&p.bench_report(facet))?;
            outputs.push(p.bench_report(facet));
        }

        if self.cfg.bench.ablation {
            let labels = read_labels(&p.labels())?;
            let split = SplitSpec::read(&p.split())?;
            let ablation = run_ablation(&self.cfg, &papers, &index, &labels, &split, &loaded[&Facet::Method].queries, &leakage, &eval)?;
            io::write_json(&p.ablation(), &ablation)?;
            let md = p.reports().join("ablation.md");
            fs::write(&md, ablation.to_markdown()).map_err(|e| IoError::io(&md, e))?;
            outputs.push(p.ablation());
            outputs.push(md);
        }

        let summary = RunSummary {
            reports: outputs
                .iter()
                .map(|o| {
                    let name = o.strip_prefix(&p.root).unwrap_or(o).to_string_lossy().replace('\\', "/");
                    Ok((name, sha256_path(o)?))
                })
                .collect::<Result<_, IoError>>()?,
        };
        io::write_json(&p.summary(), &summary)?;
        outputs.push(p.summary());
        Ok(outputs)
    }
}

/// Restricts both score sets to their common pair ids, in the order of `human`.
fn align_scores(
    human: Vec<agreement::ScoreRecord>,
    llm: Vec<agreement::ScoreRecord>,
) -> (Vec<agreement::ScoreRecord>, Vec<agreement::ScoreRecord>) {
    let by_id: BTreeMap<String, agreement::ScoreRecord> = llm.into_iter().map(|r| (r.pair_id.clone(), r)).collect();
    human
        .into_iter()
        .filter_map(|h| by_id.get(&h.pair_id).cloned().map(|l| (h, l)))
        .unzip()
}

/// Word tokenizer over every title and abstract in `papers`.
pub fn corpus_tokenizer(cfg: &PipelineConfig, papers: &[Paper]) -> Tokenizer {
    let texts = papers
        .iter()
        .flat_map(|p| [p.title.as_str(), p.abstract_text.as_str()]);
    Tokenizer::build_word(texts, cfg.train.min_token_count, cfg.train.max_vocab)
}

/// An untrained model for `facet` as configured by `cfg.train`.
pub fn initial_model(cfg: &PipelineConfig, facet: Facet, papers: &[Paper]) -> Result<FacetModel, PipelineError> {
    let t = &cfg.train;
    let mut model = match t.backbone {
        BackboneChoice::Compact => FacetModel::compact(
            facet,
            Arc::new(corpus_tokenizer(cfg, papers)),
            t.max_tokens,
            t.init_seed,
            HeadInit::SmallUniform(HEAD_INIT_SCALE),
        )?,
        BackboneChoice::Pretrained => {
            let dir = t
                .pretrained_dir
                .as_ref()
                .ok_or_else(|| PipelineError::NotConfigured("train.pretrained_dir is not set".into()))?;
            pretrained::load_bert(dir, facet, t.max_tokens)?
        }
    };
    model.set_dropout(t.dropout)?;
    Ok(model)
}

/// Trains `model`, writes the best epoch's checkpoint and a JSONL step log
/// into `out`, and returns the trained model.
pub fn train_and_save(
    cfg: &PipelineConfig,
    model: FacetModel,
    labels: &[LabeledPair],
    triplets: &BTreeMap<String, Vec<crate::Triplet>>,
    papers: &PaperIndex,
    split: &SplitSpec,
    out: &Path,
) -> Result<FacetModel, PipelineError> {
    let facet = model.facet();
    let pools = effective_pools(labels, &merge_policy(cfg, facet))?;
    let train_cfg = cfg.train_config();
    let data = TrainingData {
        triplets,
        pools: &pools,
        papers,
        split,
    };
    let outcome = trainer::train(model, &data, &train_cfg)?;
    if out.exists() {
        fs::remove_dir_all(out).map_err(|e| IoError::io(out, e))?;
    }
    let created = CreationMetadata {
        rng_seed: Some(train_cfg.rng_seed),
        epoch: outcome.best_epoch,
        config_hash: Some(train_cfg.hash()),
        source: Some(format!("{} triplets", triplets.values().map(Vec::len).sum::<usize>())),
        ..CreationMetadata::new()
    };
    checkpoint::save(
        &outcome.model,
        out,
        created,
        outcome.best().map(|c| c.validation_metric),
        outcome.validation_history(),
    )?;
    io::write_jsonl(&out.join("train_log.jsonl"), &outcome.log)?;
    io::write_jsonl(&out.join("epochs.jsonl"), &outcome.checkpoints)?;
    Ok(outcome.model)
}

#[allow(clippy::too_many_arguments)]
fn run_ablation(
    cfg: &PipelineConfig,
    papers: &[Paper],
    index: &PaperIndex,
    labels: &[LabeledPair],
    split: &SplitSpec,
    queries: &[crate::benchmark::EvalQuery],
    leakage: &LeakageReport,
    eval: &EvalConfig,
) -> Result<crate::benchmark::AblationReport, PipelineError> {
    let base = initial_model(cfg, Facet::Method, papers)?;
    let make_model = || Ok(base.clone());
    let inputs = AblationInputs {
        labels,
        papers: index,
        split,
        queries,
        leakage: Some(leakage),
        eval,
    };
    Ok(ablation_label_scale(&make_model, &cfg.train_config(), &inputs)?)
}

/// Reads a bench report written by the bench stage.
pub fn read_bench_report(path: &Path) -> Result<EvalReport, PipelineError> {
    Ok(io::read_json(path)?)
}
