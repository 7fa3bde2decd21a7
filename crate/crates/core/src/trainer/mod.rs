//! Pairwise margin-ranking training of a [`FacetModel`].
//!
//! Each epoch draws a capped per-seed triplet sample, shuffles it, and runs
//! AdamW over mini-batches with a warmup-then-linear-decay learning rate
//! and global gradient-norm clipping. Validation rank agreement is measured
//! after every epoch; the best epoch's parameters are returned.

pub mod optim;

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::PaperIndex;
use crate::encoder::{EncodedPair, EncoderError, FacetModel, ScoreMode};
use crate::io::sha256_hex;
use crate::metrics::{self, MetricError};
use crate::triplets::{epoch_rng, epoch_sample, SplitPart, SplitSpec, Triplet, TripletError};
pub use optim::{clip_global_norm, global_norm, AdamW, AdamWConfig};

/// Slack added to the clip threshold in the post-clip norm check.
pub const CLIP_TOLERANCE: f64 = 1e-9;
const SHUFFLE_STREAM_SALT: u64 = 0x5348_5546;
const DROPOUT_STREAM_SALT: u64 = 0x4452_4f50;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("total_steps must be positive")]
    ZeroSteps,
    #[error("step {step} beyond total_steps {total}")]
    StepRange { step: usize, total: usize },
    #[error("no training triplets")]
    EmptyTraining,
    #[error("triplet facet {found} does not match model facet {expected}")]
    FacetMismatch { expected: String, found: String },
    #[error("seed `{0}` has triplets but no split assignment")]
    Unassigned(String),
    #[error("unknown paper `{0}`")]
    UnknownPaper(String),
    #[error("no validation seed has two or more distinct labels")]
    NoValidationSeeds,
    #[error("non-finite loss at step {step} (epoch {epoch}); batch: {batch:?}")]
    NonFinite {
        step: usize,
        epoch: usize,
        batch: Vec<String>,
    },
    #[error("post-clip gradient norm {norm} exceeds {limit} at step {step}")]
    ClipViolation { step: usize, norm: f64, limit: f64 },
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Triplet(#[from] TripletError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// How per-seed validation correlations are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgreementMode {
    /// Mean of per-seed correlations over qualifying seeds.
    #[default]
    PerSeed,
    /// One correlation over all qualifying seeds' pairs.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub margin: f64,
    pub learning_rate: f64,
    pub warmup_fraction: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub grad_clip_norm: f64,
    pub per_seed_cap: usize,
    pub rng_seed: u64,
    pub weight_decay: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub agreement: AgreementMode,
    /// Keep each mini-batch within one seed where possible.
    pub group_batches_by_seed: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            margin: 0.5,
            learning_rate: 2e-5,
            warmup_fraction: 0.10,
            epochs: 10,
            batch_size: 16,
            grad_clip_norm: 1.0,
            per_seed_cap: 10,
            rng_seed: 42,
            weight_decay: 0.01,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            agreement: AgreementMode::PerSeed,
            group_batches_by_seed: false,
        }
    }
}

impl TrainConfig {
    /// Defaults for the compact from-scratch backbone, which needs a larger
    /// step size than fine-tuning a pretrained encoder.
    pub fn compact() -> Self {
        Self {
            learning_rate: 1e-3,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return bad("margin must be positive");
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return bad("warmup_fraction must be in [0, 1)");
        }
        if self.batch_size == 0 || self.per_seed_cap == 0 {
            return bad("batch_size and per_seed_cap must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip_norm > 0.0) {
            return bad("learning_rate and grad_clip_norm must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight_decay must be non-negative");
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn hash(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

/// `max(0, margin - (s_pos - s_neg))`.
pub fn margin_loss(s_pos: f64, s_neg: f64, margin: f64) -> f64 {
    (margin - (s_pos - s_neg)).max(0.0)
}

/// Subgradient of [`margin_loss`] with respect to `(s_pos, s_neg)`; zero at
/// the kink.
pub fn margin_loss_grad(s_pos: f64, s_neg: f64, margin: f64) -> (f64, f64) {
    if margin - (s_pos - s_neg) > 0.0 {
        (-1.0, 1.0)
    } else {
        (0.0, 0.0)
    }
}

/// Linear ramp from 0 to `base_lr` over the first `warmup_fraction` of
/// steps, then linear decay to 0 at `total_steps`.
pub fn lr_schedule(step: usize, total_steps: usize, base_lr: f64, warmup_fraction: f64) -> Result<f64, TrainError> {
    if total_steps == 0 {
        return Err(TrainError::ZeroSteps);
    }
    if step > total_steps {
        return Err(TrainError::StepRange { step, total: total_steps });
    }
    let total = total_steps as f64;
    let warm = warmup_fraction * total;
    let s = step as f64;
    Ok(if s < warm {
        base_lr * s / warm
    } else {
        base_lr * (total - s) / (total - warm)
    })
}

/// Gold effective labels for one seed's candidates.
pub type LabeledPool = (String, Vec<(String, u8)>);

/// Seeds whose labels can be correlated: two or more candidates and two or
/// more distinct labels.
fn qualifies(pool: &[(String, u8)]) -> bool {
    pool.len() >= 2 && pool.iter().any(|(_, l)| *l != pool[0].1)
}

/// Rank agreement between scores and labels. A seed whose scores are all
/// equal contributes 0.
pub fn agreement_from_scores(pools: &[(Vec<f64>, Vec<u8>)], mode: AgreementMode) -> Result<f64, TrainError> {
    let usable: Vec<&(Vec<f64>, Vec<u8>)> = pools
        .iter()
        .filter(|(_, labels)| labels.len() >= 2 && labels.iter().any(|l| *l != labels[0]))
        .collect();
    if usable.is_empty() {
        return Err(TrainError::NoValidationSeeds);
    }
    let rho = |s: &[f64], l: &[u8]| -> Result<f64, TrainError> {
        let gold: Vec<f64> = l.iter().map(|&v| v as f64).collect();
        match metrics::spearman(s, &gold) {
            Ok(r) => Ok(r),
            Err(MetricError::Constant) => Ok(0.0),
            Err(e) => Err(e.into()),
        }
    };
    match mode {
        AgreementMode::PerSeed => {
            let mut total = 0.0;
            for (s, l) in &usable {
                total += rho(s, l)?;
            }
            Ok(total / usable.len() as f64)
        }
        AgreementMode::Pooled => {
            let s: Vec<f64> = usable.iter().flat_map(|(s, _)| s.iter().copied()).collect();
            let l: Vec<u8> = usable.iter().flat_map(|(_, l)| l.iter().copied()).collect();
            rho(&s, &l)
        }
    }
}

/// Validation rank agreement of `model` on `pools`.
pub fn validation_agreement(
    model: &FacetModel,
    pools: &[LabeledPool],
    papers: &PaperIndex,
    mode: AgreementMode,
) -> Result<f64, TrainError> {
    let mut encoded = HashMap::new();
    encode_into(model, pools.iter().flat_map(|(s, c)| c.iter().map(move |(c, _)| (s.as_str(), c.as_str()))), papers, &mut encoded)?;
    validation_with(model, pools, &encoded, mode)
}

type PairKey = (String, String);

fn encode_into<'a>(
    model: &FacetModel,
    pairs: impl Iterator<Item = (&'a str, &'a str)>,
    papers: &PaperIndex,
    out: &mut HashMap<PairKey, EncodedPair>,
) -> Result<(), TrainError> {
    let mut todo: Vec<PairKey> = pairs
        .filter(|(s, c)| !out.contains_key(&(s.to_string(), c.to_string())))
        .map(|(s, c)| (s.to_string(), c.to_string()))
        .collect();
    todo.sort();
    todo.dedup();
    for (s, c) in &todo {
        for id in [s, c] {
            if !papers.contains_key(id) {
                return Err(TrainError::UnknownPaper(id.clone()));
            }
        }
    }
    let encoded: Vec<Result<EncodedPair, EncoderError>> =
        todo.par_iter().map(|(s, c)| model.encode(&papers[s], &papers[c])).collect();
    for (key, pair) in todo.into_iter().zip(encoded) {
        out.insert(key, pair?);
    }
    Ok(())
}

fn validation_with(
    model: &FacetModel,
    pools: &[LabeledPool],
    encoded: &HashMap<PairKey, EncodedPair>,
    mode: AgreementMode,
) -> Result<f64, TrainError> {
    let mut scored = Vec::new();
    for (seed, pool) in pools.iter().filter(|(_, p)| qualifies(p)) {
        let pairs: Vec<EncodedPair> = pool
            .iter()
            .map(|(c, _)| encoded[&(seed.clone(), c.clone())].clone())
            .collect();
        let scores = model.score_batch(&pairs)?;
        scored.push((scores, pool.iter().map(|(_, l)| *l).collect()));
    }
    agreement_from_scores(&scored, mode)
}

/// Per-epoch record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub validation_metric: f64,
    pub mean_train_loss: f64,
    /// Hash of the parameters after this epoch.
    pub params_sha256: String,
    pub config: TrainConfig,
}

/// One optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FacetModel,
    pub checkpoints: Vec<Checkpoint>,
    pub best_epoch: Option<usize>,
    pub log: Vec<StepLog>,
}

impl TrainOutcome {
    pub fn best(&self) -> Option<&Checkpoint> {
        self.best_epoch.and_then(|e| self.checkpoints.iter().find(|c| c.epoch == e))
    }

    pub fn epoch_losses(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.mean_train_loss).collect()
    }

    pub fn validation_history(&self) -> Vec<f64> {
        self.checkpoints.iter().map(|c| c.validation_metric).collect()
    }
}

/// Index of the maximum, earliest on ties. NaN never wins.
pub fn select_best(metrics: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &m) in metrics.iter().enumerate() {
        if m.is_nan() {
            continue;
        }
        if best.is_none_or(|b| m > metrics[b]) {
            best = Some(i);
        }
    }
    best
}

/// Everything the training loop reads besides the model.
pub struct TrainingData<'a> {
    pub triplets: &'a BTreeMap<String, Vec<Triplet>>,
    /// Effective labels per seed; only validation-split seeds are used.
    pub pools: &'a [LabeledPool],
    pub papers: &'a PaperIndex,
    pub split: &'a SplitSpec,
}

fn param_hash(params: &[f64]) -> String {
    let bytes: Vec<u8> = params.iter().flat_map(|v| v.to_le_bytes()).collect();
    sha256_hex(&bytes)
}

/// Dropout stream for one scored item, independent of thread scheduling.
fn item_rng(rng_seed: u64, step: usize, item: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed ^ DROPOUT_STREAM_SALT);
    rng.set_stream(((step as u64) << 20) | item as u64);
    rng
}

fn batches(sample: &[Triplet], cfg: &TrainConfig, epoch: usize) -> Vec<Vec<Triplet>> {
    let mut rng = epoch_rng(cfg.rng_seed ^ SHUFFLE_STREAM_SALT, epoch as u64);
    if cfg.group_batches_by_seed {
        let mut groups: Vec<Vec<Triplet>> = Vec::new();
        for t in sample {
            match groups.last_mut() {
                Some(g) if g[0].seed_id == t.seed_id => g.push(t.clone()),
                _ => groups.push(vec![t.clone()]),
            }
        }
        groups.shuffle(&mut rng);
        let mut out = Vec::new();
        for mut g in groups {
            g.shuffle(&mut rng);
            out.extend(g.chunks(cfg.batch_size).map(<[Triplet]>::to_vec));
        }
        out
    } else {
        let mut order = sample.to_vec();
        order.shuffle(&mut rng);
        order.chunks(cfg.batch_size).map(<[Triplet]>::to_vec).collect()
    }
}

fn steps_per_epoch(sample: &[Triplet], cfg: &TrainConfig) -> usize {
    if cfg.group_batches_by_seed {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for t in sample {
            *counts.entry(&t.seed_id).or_default() += 1;
        }
        counts.values().map(|n| n.div_ceil(cfg.batch_size)).sum()
    } else {
        sample.len().div_ceil(cfg.batch_size)
    }
}

/// Trains `model` on the train-split triplets and returns the parameters of
/// the epoch with the highest validation agreement.
pub fn train(model: FacetModel, data: &TrainingData<'_>, cfg: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    if cfg.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            checkpoints: Vec::new(),
            best_epoch: None,
            log: Vec::new(),
        });
    }
    let mut train_set: BTreeMap<String, Vec<Triplet>> = BTreeMap::new();
    for (seed, ts) in data.triplets {
        if let Some(t) = ts.iter().find(|t| t.facet != model.facet()) {
            return Err(TrainError::FacetMismatch {
                expected: model.facet().to_string(),
                found: t.facet.to_string(),
            });
        }
        match data.split.part_of(seed) {
            None => return Err(TrainError::Unassigned(seed.clone())),
            Some(SplitPart::Train) if !ts.is_empty() => {
                train_set.insert(seed.clone(), ts.clone());
            }
            Some(_) => {}
        }
    }
    if train_set.is_empty() {
        return Err(TrainError::EmptyTraining);
    }
    let val_pools: Vec<LabeledPool> = data
        .pools
        .iter()
        .filter(|(s, p)| data.split.part_of(s) == Some(SplitPart::Val) && qualifies(p))
        .cloned()
        .collect();
    if val_pools.is_empty() {
        return Err(TrainError::NoValidationSeeds);
    }

    let mut encoded = HashMap::new();
    encode_into(
        &model,
        train_set
            .values()
            .flatten()
            .flat_map(|t| [(t.seed_id.as_str(), t.pos_id.as_str()), (t.seed_id.as_str(), t.neg_id.as_str())]),
        data.papers,
        &mut encoded,
    )?;
    encode_into(
        &model,
        val_pools.iter().flat_map(|(s, c)| c.iter().map(move |(c, _)| (s.as_str(), c.as_str()))),
        data.papers,
        &mut encoded,
    )?;

    let first_sample = epoch_sample(&train_set, cfg.per_seed_cap, cfg.rng_seed, 0)?;
    let total_steps = steps_per_epoch(&first_sample, cfg) * cfg.epochs;
    tracing::info!(
        facet = %model.facet(),
        seeds = train_set.len(),
        triplets_per_epoch = first_sample.len(),
        total_steps,
        "training"
    );

    let mut model = model;
    let mut opt = AdamW::new(cfg.adamw(), model.layout());
    let n_params = model.params().len();
    let mut step = 0usize;
    let mut log = Vec::with_capacity(total_steps);
    let mut checkpoints = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, Vec<f64>)> = None;

    for epoch in 0..cfg.epochs {
        let sample = if epoch == 0 {
            first_sample.clone()
        } else {
            epoch_sample(&train_set, cfg.per_seed_cap, cfg.rng_seed, epoch as u64)?
        };
        let mut loss_sum = 0.0;
        let mut loss_count = 0usize;
        for batch in batches(&sample, cfg, epoch) {
            let n = batch.len() as f64;
            let results: Vec<Result<(f64, Option<Vec<f64>>), TrainError>> = batch
                .par_iter()
                .enumerate()
                .map(|(i, t)| {
                    let pos = &encoded[&(t.seed_id.clone(), t.pos_id.clone())];
                    let neg = &encoded[&(t.seed_id.clone(), t.neg_id.clone())];
                    let mut rng = item_rng(cfg.rng_seed, step, 2 * i);
                    let (sp, ap) = model.forward(pos, ScoreMode::Train(&mut rng))?;
                    let mut rng = item_rng(cfg.rng_seed, step, 2 * i + 1);
                    let (sn, an) = model.forward(neg, ScoreMode::Train(&mut rng))?;
                    let loss = margin_loss(sp, sn, cfg.margin);
                    let (dp, dn) = margin_loss_grad(sp, sn, cfg.margin);
                    if dp == 0.0 {
                        return Ok((loss, None));
                    }
                    let mut g = vec![0.0; n_params];
                    model.backward(&ap, dp / n, &mut g);
                    model.backward(&an, dn / n, &mut g);
                    Ok((loss, Some(g)))
                })
                .collect();
            let mut grad = vec![0.0; n_params];
            let mut batch_loss = 0.0;
            for r in results {
                let (loss, g) = r?;
                batch_loss += loss;
                if let Some(g) = g {
                    grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
            }
            if !batch_loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(TrainError::NonFinite {
                    step,
                    epoch,
                    batch: batch.iter().map(|t| format!("{}:{}>{}", t.seed_id, t.pos_id, t.neg_id)).collect(),
                });
            }
            let grad_norm = clip_global_norm(&mut grad, cfg.grad_clip_norm);
            let clipped_norm = global_norm(&grad);
            if clipped_norm > cfg.grad_clip_norm + CLIP_TOLERANCE {
                return Err(TrainError::ClipViolation { step, norm: clipped_norm, limit: cfg.grad_clip_norm });
            }
            let lr = lr_schedule(step, total_steps, cfg.learning_rate, cfg.warmup_fraction)?;
            opt.step(model.params_mut(), &grad, lr);
            log.push(StepLog {
                epoch,
                step,
                lr,
                loss: batch_loss / n,
                grad_norm,
                clipped_norm,
            });
            loss_sum += batch_loss;
            loss_count += batch.len();
            step += 1;
        }
        let metric = validation_with(&model, &val_pools, &encoded, cfg.agreement)?;
        let mean_loss = loss_sum / loss_count.max(1) as f64;
        tracing::info!(epoch, mean_loss, validation = metric, "epoch done");
        checkpoints.push(Checkpoint {
            epoch,
            validation_metric: metric,
            mean_train_loss: mean_loss,
            params_sha256: param_hash(model.params()),
            config: cfg.clone(),
        });
        if best.as_ref().is_none_or(|(m, _)| metric > *m) {
            best = Some((metric, model.params().to_vec()));
        }
    }

    let best_epoch = select_best(&checkpoints.iter().map(|c| c.validation_metric).collect::<Vec<_>>());
    if let Some((_, params)) = best {
        model.params_mut().copy_from_slice(&params);
    }
    Ok(TrainOutcome {
        model,
        checkpoints,
        best_epoch,
        log,
    })
}
