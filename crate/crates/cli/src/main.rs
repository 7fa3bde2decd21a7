//! `facetrank`: corpus preparation, annotation, training, evaluation and
//! serving from the command line.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use facetrank_core::agreement;
use facetrank_core::annotator::{
    self, annotate_corpus, read_labels, summarize_errors, write_errors, write_labels, AnnotationError, AnnotatorConfig,
    ChatClient, FixedClock, LabelCache, ReplayClient, SystemClock,
};
use facetrank_core::benchmark::{
    ablation_label_scale, check_leakage, evaluate_facet, load_benchmark, AblationInputs, EvalConfig,
};
use facetrank_core::corpus::{self, index_papers, IngestOptions, Paper};
use facetrank_core::encoder::checkpoint;
use facetrank_core::io;
use facetrank_core::metrics::MetricConfig;
use facetrank_core::pipeline::{self, Paths, Pipeline, PipelineConfig, Stage};
use facetrank_core::triplets::{self, build_triplets, LabelScale, MergePolicy, SplitSpec};
use facetrank_core::Facet;
use facetrank_server::{AppState, ServerConfig};

#[derive(Parser)]
#[command(name = "facetrank", version, about = "Facet-aware reranking of scientific papers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Paper and pool files.
    #[command(subcommand)]
    Corpus(CorpusCmd),
    /// LLM facet labels.
    #[command(subcommand)]
    Annotate(AnnotateCmd),
    /// Human/LLM label agreement.
    #[command(subcommand)]
    Agreement(AgreementCmd),
    /// Ranking triplets and seed-level splits.
    #[command(subcommand)]
    Triplets(TripletsCmd),
    /// Train one facet model.
    Train(TrainArgs),
    /// Benchmark evaluation.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Serve the reranking API.
    Serve(ServeArgs),
    /// Run configured pipeline stages.
    #[command(subcommand)]
    Pipeline(PipelineCmd),
}

#[derive(Subcommand)]
enum CorpusCmd {
    /// Validate a papers file and write the accepted records.
    Ingest {
        #[arg(long)]
        papers: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        min_abstract_chars: usize,
        /// Where to write rejected lines.
        #[arg(long)]
        rejections: Option<PathBuf>,
    },
    /// Fetch a recommendation pool for every paper in `--seeds`.
    #[cfg(feature = "http")]
    Fetch {
        #[arg(long)]
        seeds: PathBuf,
        #[arg(long, default_value_t = 30)]
        limit: usize,
        /// Pools output.
        #[arg(long)]
        out: PathBuf,
        /// Seeds plus fetched candidates.
        #[arg(long)]
        papers_out: PathBuf,
        #[arg(long)]
        base_url: Option<String>,
        #[arg(long, default_value_t = 4)]
        parallelism: usize,
        #[arg(long, default_value_t = 1.0)]
        requests_per_second: f64,
    },
    /// Pool and abstract-length statistics as JSON.
    Stats {
        #[arg(long)]
        papers: PathBuf,
        #[arg(long)]
        pools: PathBuf,
    },
}

#[derive(Subcommand)]
enum AnnotateCmd {
    /// Label every seed/candidate pair.
    Run(AnnotateArgs),
    /// Summarize failed annotations by category.
    AuditErrors {
        #[arg(long)]
        errors: PathBuf,
        /// Also print each failure's last raw reply.
        #[arg(long)]
        verbose: bool,
    },
}

#[derive(Args)]
struct AnnotateArgs {
    #[arg(long)]
    papers: PathBuf,
    #[arg(long)]
    pools: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Failed pairs; defaults to `<out>.errors.jsonl`.
    #[arg(long)]
    errors: Option<PathBuf>,
    /// Serve recorded replies instead of calling the API.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    api_base: Option<String>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    requests_per_second: Option<f64>,
    /// Stamp every label with this time instead of the clock.
    #[arg(long)]
    fixed_timestamp: Option<String>,
}

#[derive(Subcommand)]
enum AgreementCmd {
    /// Confusion matrices, Spearman and disagreements. Without inputs the
    /// bundled 100-pair validation sample is used.
    Report {
        #[arg(long, requires = "llm")]
        human: Option<PathBuf>,
        #[arg(long, requires = "human")]
        llm: Option<PathBuf>,
        #[arg(long, default_value_t = 2)]
        threshold: u8,
        /// Write report.json, report.md and disagreements.csv here.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum TripletsCmd {
    /// Enumerate triplets for one facet.
    Build {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        facet: Facet,
        /// Method grade scale; ignored for Background.
        #[arg(long, default_value = "0-2")]
        merge_scale: LabelScale,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign seeds to train/val/test.
    Split {
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, num_args = 3, default_values_t = [0.8, 0.1, 0.1])]
        fractions: Vec<f64>,
        #[arg(long, default_value_t = 42)]
        rng_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: PathBuf,
    /// Override a config key, e.g. `--set train.epochs=3`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<PipelineConfig> {
        PipelineConfig::load(&self.config, &self.overrides)
            .with_context(|| format!("loading {}", self.config.display()))
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    facet: Facet,
    #[command(flatten)]
    config: ConfigArgs,
    /// Checkpoint directory.
    #[arg(long)]
    out: PathBuf,
    /// Inputs default to the pipeline's output layout under `out_dir`.
    #[arg(long)]
    papers: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    triplets: Option<PathBuf>,
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Evaluate one checkpoint on one facet of a benchmark.
    Run {
        #[arg(long)]
        facet: Facet,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        benchmark: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Training papers for the leakage check.
        #[arg(long)]
        train_papers: Option<PathBuf>,
        /// Evaluate despite overlap or without a check; marks the report tainted.
        #[arg(long)]
        waive_leakage: bool,
        #[arg(long, default_value_t = 0.2)]
        ndcg_percent: f64,
    },
    /// Method label-scale ablation (0-3 against 0-2).
    Ablation {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    bg: PathBuf,
    #[arg(long)]
    mt: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, default_value_t = facetrank_server::DEFAULT_MAX_CANDIDATES)]
    max_candidates: usize,
    #[arg(long, default_value_t = facetrank_server::DEFAULT_QUEUE_CAPACITY)]
    queue: usize,
    /// Papers file for looking up candidate texts by id.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Subcommand)]
enum PipelineCmd {
    /// Run one stage, or `all`.
    Run {
        stage: String,
        #[command(flatten)]
        config: ConfigArgs,
        /// Rerun even if the stage manifest is current.
        #[arg(long)]
        force: bool,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Corpus(c) => corpus_cmd(c),
        Command::Annotate(AnnotateCmd::Run(a)) => annotate_run(a),
        Command::Annotate(AnnotateCmd::AuditErrors { errors, verbose }) => {
            let errs: Vec<AnnotationError> = io::read_jsonl(&errors)?;
            println!("{} failed pairs", errs.len());
            for (category, n) in summarize_errors(&errs) {
                println!("{category}\t{n}");
            }
            if verbose {
                for e in &errs {
                    println!("{}::{}\t{}\t{}", e.seed_id, e.candidate_id, e.last_error, e.last_raw.as_deref().unwrap_or(""));
                }
            }
            Ok(())
        }
        Command::Agreement(AgreementCmd::Report {
            human,
            llm,
            threshold,
            out_dir,
        }) => {
            let (human, llm) = match (human, llm) {
                (Some(h), Some(l)) => (agreement::read_any_scores(&h)?, agreement::read_any_scores(&l)?),
                _ => agreement::validation_sample(),
            };
            let report = agreement::agreement_report(&human, &llm, threshold)?;
            print!("{}", report.to_markdown());
            if let Some(dir) = out_dir {
                io::write_json(&dir.join("report.json"), &report)?;
                std::fs::write(dir.join("report.md"), report.to_markdown())?;
                std::fs::write(dir.join("disagreements.csv"), report.disagreements_csv())?;
            }
            Ok(())
        }
        Command::Triplets(t) => triplets_cmd(t),
        Command::Train(t) => train_cmd(t),
        Command::Bench(b) => bench_cmd(b),
        Command::Serve(s) => serve_cmd(s),
        Command::Pipeline(PipelineCmd::Run { stage, config, force }) => {
            let p = Pipeline::new(config.load()?);
            let stages = if stage == "all" {
                Stage::ALL.to_vec()
            } else {
                vec![stage.parse::<Stage>()?]
            };
            for s in stages {
                let run = p.run_stage(s, force)?;
                let state = if run.skipped { "skipped (up to date)" } else { "done" };
                println!("{s}: {state} in {} ms", run.manifest.duration_ms);
            }
            if p.paths().summary().is_file() && stage == "all" {
                println!("{}", std::fs::read_to_string(p.paths().summary())?);
            }
            Ok(())
        }
    }
}

fn corpus_cmd(cmd: CorpusCmd) -> Result<()> {
    match cmd {
        CorpusCmd::Ingest {
            papers,
            out,
            min_abstract_chars,
            rejections,
        } => {
            let ing = corpus::ingest_jsonl_with(&papers, &IngestOptions { min_abstract_chars })?;
            corpus::write_papers(&out, &ing.papers)?;
            if let Some(r) = rejections {
                io::write_jsonl(&r, &ing.rejections)?;
            }
            println!("accepted {} papers, rejected {}", ing.papers.len(), ing.rejections.len());
            for r in ing.rejections.iter().take(20) {
                println!("  line {}: {}", r.line, r.cause);
            }
            Ok(())
        }
        #[cfg(feature = "http")]
        CorpusCmd::Fetch {
            seeds,
            limit,
            out,
            papers_out,
            base_url,
            parallelism,
            requests_per_second,
        } => {
            let seed_papers = corpus::ingest_jsonl(&seeds)?.papers;
            let client = corpus::http::HttpRecommendationClient::from_env(base_url)?;
            let opts = corpus::FetchOptions {
                limit,
                parallelism,
                requests_per_second,
                ..Default::default()
            };
            let mut pools = Vec::new();
            let mut failed = 0;
            for r in corpus::fetch_all(&seed_papers, &client, &opts) {
                match r {
                    Ok(p) => pools.push(p),
                    Err(e) => {
                        failed += 1;
                        tracing::warn!("{e}");
                    }
                }
            }
            let mut all: BTreeMap<String, Paper> = BTreeMap::new();
            for p in &pools {
                for paper in std::iter::once(&p.seed).chain(&p.candidates) {
                    all.entry(paper.paper_id.clone()).or_insert_with(|| paper.clone());
                }
            }
            corpus::write_pools(&out, &pools)?;
            corpus::write_papers(&papers_out, &all.into_values().collect::<Vec<_>>())?;
            println!("fetched {} pools, {failed} seeds failed", pools.len());
            Ok(())
        }
        CorpusCmd::Stats { papers, pools } => {
            let index = index_papers(&corpus::ingest_jsonl(&papers)?.papers);
            let pools = corpus::read_pools(&pools, &index)?;
            println!("{}", serde_json::to_string_pretty(&corpus::corpus_stats(&pools)?)?);
            Ok(())
        }
    }
}

fn annotate_run(a: AnnotateArgs) -> Result<()> {
    let index = index_papers(&corpus::ingest_jsonl(&a.papers)?.papers);
    let pools = corpus::read_pools(&a.pools, &index)?;
    let defaults = AnnotatorConfig::default();
    let cfg = AnnotatorConfig {
        model: a.model.unwrap_or(defaults.model),
        temperature: a.temperature.unwrap_or(defaults.temperature),
        parallelism: a.parallelism.unwrap_or(defaults.parallelism),
        // Recorded replies need no rate limit unless one is asked for.
        requests_per_second: a.requests_per_second.unwrap_or(if a.replay.is_some() {
            0.0
        } else {
            defaults.requests_per_second
        }),
        retry: defaults.retry,
    };
    let client: Box<dyn ChatClient> = match &a.replay {
        Some(path) => Box::new(ReplayClient::load(path)?),
        None => http_chat_client(a.api_base.clone())?,
    };
    let fixed = a.fixed_timestamp.map(FixedClock);
    let clock: &dyn annotator::Clock = match &fixed {
        Some(c) => c,
        None => &SystemClock,
    };
    let cache = LabelCache::open(&annotator::default_cache_path(&a.out))?;
    let run = annotate_corpus(&pools, client.as_ref(), &cfg, &cache, clock);
    write_labels(&a.out, &run.labels)?;
    let errors = a.errors.unwrap_or_else(|| a.out.with_extension("errors.jsonl"));
    write_errors(&errors, &run.errors)?;
    println!("labeled {} pairs, {} failures ({})", run.labels.len(), run.errors.len(), errors.display());
    Ok(())
}

#[cfg(feature = "http")]
fn http_chat_client(base: Option<String>) -> Result<Box<dyn ChatClient>> {
    Ok(Box::new(annotator::client::OpenAiClient::from_env(base)?))
}

#[cfg(not(feature = "http"))]
fn http_chat_client(_: Option<String>) -> Result<Box<dyn ChatClient>> {
    bail!("built without the http feature; pass --replay")
}

fn triplets_cmd(cmd: TripletsCmd) -> Result<()> {
    match cmd {
        TripletsCmd::Build {
            labels,
            facet,
            merge_scale,
            out,
        } => {
            let labels = read_labels(&labels)?;
            let policy = match facet {
                Facet::Background => MergePolicy::default_for(facet),
                Facet::Method => MergePolicy::from_scale(facet, merge_scale),
            };
            let by_seed = build_triplets(&labels, &policy)?;
            triplets::write_triplets(&out, &by_seed)?;
            println!(
                "{} triplets from {} seeds",
                by_seed.values().map(Vec::len).sum::<usize>(),
                by_seed.len()
            );
            Ok(())
        }
        TripletsCmd::Split {
            labels,
            fractions,
            rng_seed,
            out,
        } => {
            let labels = read_labels(&labels)?;
            let seeds: Vec<&str> = labels.iter().map(|l| l.seed_id.as_str()).collect();
            let fractions: [f64; 3] = fractions.try_into().map_err(|_| anyhow::anyhow!("--fractions takes three values"))?;
            let split = triplets::split_by_seed(&seeds, fractions, rng_seed)?;
            split.write(&out)?;
            for part in [triplets::SplitPart::Train, triplets::SplitPart::Val, triplets::SplitPart::Test] {
                println!("{part:?}: {} seeds", split.seeds(part).len());
            }
            Ok(())
        }
    }
}

fn train_cmd(t: TrainArgs) -> Result<()> {
    let cfg = t.config.load()?;
    let paths = Paths::new(&cfg.out_dir);
    let pick = |given: Option<PathBuf>, default: PathBuf| given.unwrap_or(default);
    let papers_path = pick(t.papers, paths.papers());
    let labels_path = pick(t.labels, paths.labels());
    let triplets_path = pick(t.triplets, paths.triplets(t.facet));
    let split_path = pick(t.split, paths.split());
    for p in [&papers_path, &labels_path, &triplets_path, &split_path] {
        if !p.exists() {
            bail!("missing {}; run the corpus, annotate and triplets stages first or pass it explicitly", p.display());
        }
    }
    let papers = corpus::ingest_jsonl(&papers_path)?.papers;
    let index = index_papers(&papers);
    let labels = read_labels(&labels_path)?;
    let triplets = triplets::read_triplets(&triplets_path)?;
    let split = SplitSpec::read(&split_path)?;
    let model = pipeline::initial_model(&cfg, t.facet, &papers)?;
    pipeline::train_and_save(&cfg, model, &labels, &triplets, &index, &split, &t.out)?;
    let manifest = checkpoint::read_manifest(&t.out)?;
    println!(
        "saved {} checkpoint to {} (validation {:?})",
        t.facet,
        t.out.display(),
        manifest.validation_metric
    );
    Ok(())
}

fn bench_cmd(cmd: BenchCmd) -> Result<()> {
    match cmd {
        BenchCmd::Run {
            facet,
            model,
            benchmark,
            report,
            train_papers,
            waive_leakage,
            ndcg_percent,
        } => {
            let (model, _) = checkpoint::load(&model)?;
            if model.facet() != facet {
                bail!("checkpoint holds a {} model, --facet is {facet}", model.facet());
            }
            let loaded = load_benchmark(&benchmark, facet.into())?;
            let leakage = match &train_papers {
                Some(p) => {
                    let train = corpus::ingest_jsonl(p)?.papers;
                    Some(check_leakage(train.iter().map(|p| p.paper_id.as_str()), loaded.paper_ids()))
                }
                None => None,
            };
            let cfg = EvalConfig {
                metric: MetricConfig {
                    ndcg_percent,
                    ..MetricConfig::default()
                },
                waive_leakage,
            };
            let r = evaluate_facet(&model, &loaded.queries, leakage.as_ref(), &cfg)?;
            r.write(&report)?;
            if let Some(b) = &r.banner {
                eprintln!("{b}");
            }
            println!(
                "{facet}: NDCG%{:.0} {:?} MAP {:?} over {} queries ({} excluded)",
                ndcg_percent * 100.0,
                r.means.ndcg,
                r.means.map,
                r.evaluated,
                r.excluded
            );
            Ok(())
        }
        BenchCmd::Ablation { config, out } => {
            let cfg = config.load()?;
            let paths = Paths::new(&cfg.out_dir);
            let bench_path = cfg.bench.benchmark.clone().context("bench.benchmark is not set")?;
            let papers = corpus::ingest_jsonl(&paths.papers())
                .with_context(|| "run the corpus stage first")?
                .papers;
            let index = index_papers(&papers);
            let labels = read_labels(&paths.labels()).with_context(|| "run the annotate stage first")?;
            let split = SplitSpec::read(&paths.split()).with_context(|| "run the triplets stage first")?;
            let queries = load_benchmark(&bench_path, Facet::Method.into())?.queries;
            let bench_ids: Vec<String> = queries
                .iter()
                .flat_map(|q| std::iter::once(q.query.paper_id.clone()).chain(q.pool.iter().map(|p| p.paper.paper_id.clone())))
                .collect();
            let leakage = check_leakage(papers.iter().map(|p| p.paper_id.as_str()), bench_ids);
            let eval = EvalConfig {
                metric: cfg.bench.metric.clone(),
                waive_leakage: cfg.bench.waive_leakage,
            };
            let base = pipeline::initial_model(&cfg, Facet::Method, &papers)?;
            let make = || Ok(base.clone());
            let inputs = AblationInputs {
                labels: &labels,
                papers: &index,
                split: &split,
                queries: &queries,
                leakage: Some(&leakage),
                eval: &eval,
            };
            let report = ablation_label_scale(&make, &cfg.train_config(), &inputs)?;
            io::write_json(&out, &report)?;
            print!("{}", report.to_markdown());
            Ok(())
        }
    }
}

fn serve_cmd(s: ServeArgs) -> Result<()> {
    let cfg = ServerConfig {
        max_candidates: s.max_candidates,
        queue_capacity: s.queue,
    };
    let mut state = AppState::from_checkpoints(Some(&s.bg), Some(&s.mt), cfg)?;
    if let Some(c) = &s.corpus {
        state = state.with_corpus(c)?;
    }
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(facetrank_server::serve(s.addr, Arc::new(state)))?;
    Ok(())
}
