//! Declarative pipeline configuration.
//!
//! One TOML file describes every stage. Relative paths resolve against the
//! config file's directory. `key.path=value` overrides are applied to the
//! parsed TOML before deserialization; values parse as TOML literals and
//! fall back to plain strings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::annotator::AnnotatorConfig;
use crate::encoder::{DEFAULT_DROPOUT, DEFAULT_MAX_TOKENS};
use crate::metrics::MetricConfig;
use crate::trainer::TrainConfig;
use crate::triplets::LabelScale;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("override `{0}` is not of the form key=value")]
    Override(String),
    #[error("override `{key}`: `{segment}` is not a table")]
    OverridePath { key: String, segment: String },
    #[error("{path}: unknown key `{key}`")]
    UnknownKey { path: PathBuf, key: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Governs every stochastic stage.
    pub rng_seed: u64,
    /// Root for all stage outputs.
    pub out_dir: PathBuf,
    pub corpus: CorpusStage,
    pub annotate: AnnotateStage,
    pub agreement: AgreementStage,
    pub triplets: TripletStage,
    pub train: TrainStage,
    pub bench: BenchStage,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            rng_seed: 42,
            out_dir: PathBuf::from("run"),
            corpus: CorpusStage::default(),
            annotate: AnnotateStage::default(),
            agreement: AgreementStage::default(),
            triplets: TripletStage::default(),
            train: TrainStage::default(),
            bench: BenchStage::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusStage {
    /// Paper records, one JSON object per line.
    pub papers: PathBuf,
    /// Pool records (`seed_id`, `candidate_ids`) referencing `papers`.
    pub pools: PathBuf,
    pub min_abstract_chars: usize,
}

impl Default for CorpusStage {
    fn default() -> Self {
        Self {
            papers: PathBuf::from("papers.jsonl"),
            pools: PathBuf::from("pools.jsonl"),
            min_abstract_chars: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnotateStage {
    #[serde(flatten)]
    pub annotator: AnnotatorConfig,
    /// Recorded replies to serve instead of calling the chat API.
    pub replay: Option<PathBuf>,
    /// Chat API base URL when not replaying.
    pub api_base: Option<String>,
    /// Fixed annotation timestamp; the system clock is used when unset.
    pub fixed_timestamp: Option<String>,
}

impl Default for AnnotateStage {
    fn default() -> Self {
        Self {
            annotator: AnnotatorConfig::default(),
            replay: None,
            api_base: None,
            fixed_timestamp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgreementStage {
    /// Human scores for a validation sample; the stage only reports the
    /// label distribution when unset.
    pub human: Option<PathBuf>,
    /// LLM scores for the same sample; defaults to the pipeline's labels.
    pub llm: Option<PathBuf>,
    pub disagreement_threshold: u8,
}

impl Default for AgreementStage {
    fn default() -> Self {
        Self {
            human: None,
            llm: None,
            disagreement_threshold: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TripletStage {
    pub split_fractions: [f64; 3],
    pub method_scale: LabelScale,
}

impl Default for TripletStage {
    fn default() -> Self {
        Self {
            split_fractions: [0.8, 0.1, 0.1],
            method_scale: LabelScale::Merged,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneChoice {
    Compact,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainStage {
    pub backbone: BackboneChoice,
    /// Directory with `config.json`, `vocab.txt`, `model.safetensors`.
    pub pretrained_dir: Option<PathBuf>,
    pub max_tokens: usize,
    pub dropout: f64,
    /// Words must occur this often to enter the compact vocabulary.
    pub min_token_count: usize,
    pub max_vocab: usize,
    /// Seed for backbone initialization of the compact profile.
    pub init_seed: u64,
    #[serde(flatten)]
    pub config: TrainConfig,
}

impl Default for TrainStage {
    fn default() -> Self {
        Self {
            backbone: BackboneChoice::Compact,
            pretrained_dir: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            dropout: DEFAULT_DROPOUT,
            min_token_count: 1,
            max_vocab: 30_000,
            init_seed: 1,
            config: TrainConfig::compact(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchStage {
    /// Benchmark directory or normalized queries file.
    pub benchmark: Option<PathBuf>,
    #[serde(flatten)]
    pub metric: MetricConfig,
    pub waive_leakage: bool,
    /// Also run the Method label-scale ablation.
    pub ablation: bool,
}

impl Default for BenchStage {
    fn default() -> Self {
        Self {
            benchmark: None,
            metric: MetricConfig::default(),
            waive_leakage: false,
            ablation: true,
        }
    }
}

/// Sets `dotted.key` in a TOML table, creating intermediate tables.
pub fn apply_override(root: &mut toml::Table, assignment: &str) -> Result<(), ConfigError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| ConfigError::Override(assignment.to_string()))?;
    let mut table = root;
    for seg in parts {
        let entry = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry.as_table_mut().ok_or_else(|| ConfigError::OverridePath {
            key: key.to_string(),
            segment: seg.to_string(),
        })?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

/// Keys of `given` that do not survive a deserialize/serialize round trip.
fn first_unknown_key(given: &toml::Table, known: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in given {
        let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match (v, known.get(k)) {
            (_, None) => return Some(path),
            (toml::Value::Table(g), Some(toml::Value::Table(kn))) => {
                if let Some(p) = first_unknown_key(g, kn, &path) {
                    return Some(p);
                }
            }
            _ => {}
        }
    }
    None
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, overrides: &[String], origin: &Path) -> Result<Self, ConfigError> {
        let parse_err = |message: String| ConfigError::Parse {
            path: origin.to_path_buf(),
            message,
        };
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        if table.get("train").and_then(|t| t.get("rng_seed")).is_some() {
            return Err(ConfigError::Invalid("set the top-level rng_seed, not train.rng_seed".into()));
        }
        let mut cfg: PipelineConfig = toml::Value::Table(table.clone())
            .try_into()
            .map_err(|e: toml::de::Error| parse_err(e.to_string()))?;
        let known: toml::Table = toml::Table::try_from(&cfg).map_err(|e| parse_err(e.to_string()))?;
        if let Some(key) = first_unknown_key(&table, &known, "") {
            return Err(ConfigError::UnknownKey {
                path: origin.to_path_buf(),
                key,
            });
        }
        // An unset learning rate follows the backbone, not the flattened default.
        if table.get("train").and_then(|t| t.get("learning_rate")).is_none() {
            cfg.train.config.learning_rate = match cfg.train.backbone {
                BackboneChoice::Compact => TrainConfig::compact().learning_rate,
                BackboneChoice::Pretrained => TrainConfig::default().learning_rate,
            };
        }
        cfg.train.config.rng_seed = cfg.rng_seed;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths become relative to its directory.
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text, overrides, path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.out_dir);
        fix(&mut self.corpus.papers);
        fix(&mut self.corpus.pools);
        for p in [
            &mut self.annotate.replay,
            &mut self.agreement.human,
            &mut self.agreement.llm,
            &mut self.train.pretrained_dir,
            &mut self.bench.benchmark,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.train
            .config
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.train.backbone == BackboneChoice::Pretrained && self.train.pretrained_dir.is_none() {
            return Err(ConfigError::Invalid("train.backbone = \"pretrained\" needs train.pretrained_dir".into()));
        }
        if !(0.0..1.0).contains(&self.train.dropout) {
            return Err(ConfigError::Invalid("train.dropout must be in [0, 1)".into()));
        }
        if self.bench.metric.ndcg_percent <= 0.0 || self.bench.metric.ndcg_percent > 1.0 {
            return Err(ConfigError::Invalid("bench.ndcg_percent must be in (0, 1]".into()));
        }
        Ok(())
    }

    /// Training config with the global seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            rng_seed: self.rng_seed,
            ..self.train.config.clone()
        }
    }

    pub fn to_toml(&self) -> String {
        let mut table = toml::Table::try_from(self).expect("config serializes");
        if let Some(toml::Value::Table(t)) = table.get_mut("train") {
            t.remove("rng_seed");
        }
        toml::to_string_pretty(&table).expect("config serializes")
    }
}
