//! Pairwise cross-encoder scorer.
//!
//! A pair is laid out as `[CLS] seed-title [SEP] seed-abstract [SEP]
//! candidate-title [SEP] candidate-abstract [SEP]`, with segment id 0 for
//! the seed half (including `[CLS]`) and 1 for the candidate half. The
//! `[CLS]` representation goes through dropout and a linear head to one
//! unbounded scalar. Each [`FacetModel`] serves exactly one facet.

pub mod checkpoint;
pub mod pretrained;
pub mod tokenizer;
pub mod transformer;

use std::ops::Range;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Paper;
use crate::facet::Facet;
pub use tokenizer::{Tokenizer, TokenizerError, TokenizerKind};
pub use transformer::{Activations, HeadInit, Layout, NormPlacement, TransformerConfig};

pub const DEFAULT_MAX_TOKENS: usize = 512;
pub const DEFAULT_DROPOUT: f64 = 0.1;
/// `[CLS]` plus four `[SEP]`.
pub const STRUCTURAL_TOKENS: usize = 5;
/// Seed for the head's weight initialization.
pub const HEAD_INIT_SEED: u64 = 0x5eed_4ead;
/// Half-width of the uniform head initialization.
pub const HEAD_INIT_SCALE: f64 = 0.02;

#[derive(Debug, thiserror::Error)]
pub enum EncoderError {
    #[error("titles need {needed} tokens with structure but the budget is {budget}")]
    TitlesExceedBudget { needed: usize, budget: usize },
    #[error("pair was encoded with tokenizer {found}, model expects {expected}")]
    TokenizerMismatch { expected: String, found: String },
    #[error("pair has {len} tokens, model accepts at most {max}")]
    TooLong { len: usize, max: usize },
    #[error("token id {id} outside vocabulary of {vocab}")]
    TokenOutOfRange { id: u32, vocab: usize },
    #[error("pair {index} in batch: {source}")]
    Batch {
        index: usize,
        #[source]
        source: Box<EncoderError>,
    },
    #[error("invalid architecture: {0}")]
    Architecture(String),
    #[error("dropout {0} outside [0, 1)")]
    Dropout(f64),
}

/// Which kind of backbone a model carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackboneProfile {
    PretrainedScientific,
    CompactFromScratch,
}

impl BackboneProfile {
    pub fn as_str(self) -> &'static str {
        match self {
            BackboneProfile::PretrainedScientific => "pretrained-scientific",
            BackboneProfile::CompactFromScratch => "compact-from-scratch",
        }
    }
}

/// Token positions of the four text fields within `token_ids`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLayout {
    pub seed_title: Range<usize>,
    pub seed_abstract: Range<usize>,
    pub candidate_title: Range<usize>,
    pub candidate_abstract: Range<usize>,
}

/// Tokens removed from each field. Titles are never truncated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TruncationReport {
    pub seed_title: usize,
    pub seed_abstract: usize,
    pub candidate_title: usize,
    pub candidate_abstract: usize,
}

impl TruncationReport {
    pub fn total(&self) -> usize {
        self.seed_title + self.seed_abstract + self.candidate_title + self.candidate_abstract
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodedPair {
    pub token_ids: Vec<u32>,
    pub type_ids: Vec<u8>,
    pub segment_layout: SegmentLayout,
    pub truncation_report: TruncationReport,
    pub tokenizer_id: String,
}

/// Decoded text of the four fields of an [`EncodedPair`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairText {
    pub seed_title: String,
    pub seed_abstract: String,
    pub candidate_title: String,
    pub candidate_abstract: String,
}

impl EncodedPair {
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn decode_fields(&self, tokenizer: &Tokenizer) -> PairText {
        let l = &self.segment_layout;
        let d = |r: &Range<usize>| tokenizer.decode(&self.token_ids[r.clone()]);
        PairText {
            seed_title: d(&l.seed_title),
            seed_abstract: d(&l.seed_abstract),
            candidate_title: d(&l.candidate_title),
            candidate_abstract: d(&l.candidate_abstract),
        }
    }

    /// The whole sequence, special tokens included.
    pub fn decode(&self, tokenizer: &Tokenizer) -> String {
        tokenizer.decode(&self.token_ids)
    }
}

pub fn encode_pair(seed: &Paper, candidate: &Paper, tokenizer: &Tokenizer, max_tokens: usize) -> Result<EncodedPair, EncoderError> {
    encode_text(
        &PairText {
            seed_title: seed.title.clone(),
            seed_abstract: seed.abstract_text.clone(),
            candidate_title: candidate.title.clone(),
            candidate_abstract: candidate.abstract_text.clone(),
        },
        tokenizer,
        max_tokens,
    )
}

/// Tokenizes the four fields and trims abstract tails, the longer abstract
/// first (the seed's on equal length), until the sequence fits.
pub fn encode_text(text: &PairText, tokenizer: &Tokenizer, max_tokens: usize) -> Result<EncodedPair, EncoderError> {
    let seed_title = tokenizer.tokenize(&text.seed_title);
    let mut seed_abs = tokenizer.tokenize(&text.seed_abstract);
    let cand_title = tokenizer.tokenize(&text.candidate_title);
    let mut cand_abs = tokenizer.tokenize(&text.candidate_abstract);

    let fixed = seed_title.len() + cand_title.len() + STRUCTURAL_TOKENS;
    if fixed > max_tokens {
        return Err(EncoderError::TitlesExceedBudget { needed: fixed, budget: max_tokens });
    }
    let room = max_tokens - fixed;
    let (orig_seed, orig_cand) = (seed_abs.len(), cand_abs.len());
    let (mut keep_seed, mut keep_cand) = (orig_seed, orig_cand);
    while keep_seed + keep_cand > room {
        if keep_seed >= keep_cand {
            keep_seed -= 1;
        } else {
            keep_cand -= 1;
        }
    }
    seed_abs.truncate(keep_seed);
    cand_abs.truncate(keep_cand);

    let (cls, sep) = (tokenizer.cls_id(), tokenizer.sep_id());
    let mut ids = Vec::with_capacity(fixed + keep_seed + keep_cand);
    ids.push(cls);
    let field = |ids: &mut Vec<u32>, toks: &[u32]| {
        let start = ids.len();
        ids.extend_from_slice(toks);
        let r = start..ids.len();
        ids.push(sep);
        r
    };
    let st = field(&mut ids, &seed_title);
    let sa = field(&mut ids, &seed_abs);
    let ct = field(&mut ids, &cand_title);
    let ca = field(&mut ids, &cand_abs);
    let boundary = ct.start;
    let type_ids = (0..ids.len()).map(|i| u8::from(i >= boundary)).collect();
    Ok(EncodedPair {
        token_ids: ids,
        type_ids,
        segment_layout: SegmentLayout {
            seed_title: st,
            seed_abstract: sa,
            candidate_title: ct,
            candidate_abstract: ca,
        },
        truncation_report: TruncationReport {
            seed_abstract: orig_seed - keep_seed,
            candidate_abstract: orig_cand - keep_cand,
            ..Default::default()
        },
        tokenizer_id: tokenizer.id().to_string(),
    })
}

/// Whether dropout is active. Inference is deterministic.
pub enum ScoreMode<'a> {
    Infer,
    Train(&'a mut dyn RngCore),
}

/// One facet's scorer: backbone, head and tokenizer.
#[derive(Debug, Clone)]
pub struct FacetModel {
    facet: Facet,
    profile: BackboneProfile,
    config: TransformerConfig,
    layout: Layout,
    params: Vec<f64>,
    dropout: f64,
    tokenizer: Arc<Tokenizer>,
    max_tokens: usize,
}

impl FacetModel {
    /// Assembles a model from parts; `params` must match the layout of `config`.
    pub fn from_parts(
        facet: Facet,
        profile: BackboneProfile,
        config: TransformerConfig,
        params: Vec<f64>,
        dropout: f64,
        tokenizer: Arc<Tokenizer>,
        max_tokens: usize,
    ) -> Result<Self, EncoderError> {
        config.validate().map_err(EncoderError::Architecture)?;
        if !(0.0..1.0).contains(&dropout) {
            return Err(EncoderError::Dropout(dropout));
        }
        if config.vocab_size < tokenizer.vocab_size() {
            return Err(EncoderError::Architecture(format!(
                "embedding table has {} rows, tokenizer has {} tokens",
                config.vocab_size,
                tokenizer.vocab_size()
            )));
        }
        if max_tokens > config.max_positions {
            return Err(EncoderError::Architecture(format!(
                "max_tokens {max_tokens} exceeds {} learned positions",
                config.max_positions
            )));
        }
        let layout = Layout::new(&config);
        if params.len() != layout.total() {
            return Err(EncoderError::Architecture(format!(
                "{} parameters given, layout needs {}",
                params.len(),
                layout.total()
            )));
        }
        Ok(Self {
            facet,
            profile,
            config,
            layout,
            params,
            dropout,
            tokenizer,
            max_tokens,
        })
    }

    /// Freshly initialized compact backbone over `tokenizer`'s vocabulary.
    pub fn compact(facet: Facet, tokenizer: Arc<Tokenizer>, max_tokens: usize, init_seed: u64, head: HeadInit) -> Result<Self, EncoderError> {
        let config = TransformerConfig::compact(tokenizer.vocab_size(), max_tokens);
        Self::compact_with(facet, tokenizer, max_tokens, config, init_seed, head)
    }

    /// As [`FacetModel::compact`] with an explicit architecture.
    pub fn compact_with(
        facet: Facet,
        tokenizer: Arc<Tokenizer>,
        max_tokens: usize,
        config: TransformerConfig,
        init_seed: u64,
        head: HeadInit,
    ) -> Result<Self, EncoderError> {
        config.validate().map_err(EncoderError::Architecture)?;
        let layout = Layout::new(&config);
        let mut params = transformer::init_params(&config, &layout, HeadInit::Zero, &mut ChaCha8Rng::seed_from_u64(init_seed));
        init_head(&layout, &mut params, head);
        Self::from_parts(
            facet,
            BackboneProfile::CompactFromScratch,
            config,
            params,
            DEFAULT_DROPOUT,
            tokenizer,
            max_tokens,
        )
    }

    pub fn facet(&self) -> Facet {
        self.facet
    }

    pub fn profile(&self) -> BackboneProfile {
        self.profile
    }

    pub fn config(&self) -> &TransformerConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn set_dropout(&mut self, p: f64) -> Result<(), EncoderError> {
        if !(0.0..1.0).contains(&p) {
            return Err(EncoderError::Dropout(p));
        }
        self.dropout = p;
        Ok(())
    }

    pub fn tokenizer(&self) -> &Arc<Tokenizer> {
        &self.tokenizer
    }

    pub fn tokenizer_id(&self) -> &str {
        self.tokenizer.id()
    }

    pub fn max_tokens(&self) -> usize {
        self.max_tokens
    }

    pub fn encode(&self, seed: &Paper, candidate: &Paper) -> Result<EncodedPair, EncoderError> {
        encode_pair(seed, candidate, &self.tokenizer, self.max_tokens)
    }

    fn check(&self, pair: &EncodedPair) -> Result<(), EncoderError> {
        if pair.tokenizer_id != self.tokenizer.id() {
            return Err(EncoderError::TokenizerMismatch {
                expected: self.tokenizer.id().to_string(),
                found: pair.tokenizer_id.clone(),
            });
        }
        if pair.len() > self.config.max_positions {
            return Err(EncoderError::TooLong { len: pair.len(), max: self.config.max_positions });
        }
        if let Some(&id) = pair.token_ids.iter().find(|&&id| id as usize >= self.config.vocab_size) {
            return Err(EncoderError::TokenOutOfRange { id, vocab: self.config.vocab_size });
        }
        Ok(())
    }

    fn dropout_mask(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let keep = 1.0 / (1.0 - self.dropout);
        (0..self.config.hidden)
            .map(|_| {
                let u = (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
                if u < self.dropout {
                    0.0
                } else {
                    keep
                }
            })
            .collect()
    }

    pub fn score(&self, pair: &EncodedPair, mode: ScoreMode<'_>) -> Result<f64, EncoderError> {
        Ok(self.forward(pair, mode)?.0)
    }

    /// Score plus the activations needed by [`FacetModel::backward`].
    pub fn forward(&self, pair: &EncodedPair, mode: ScoreMode<'_>) -> Result<(f64, Activations), EncoderError> {
        self.check(pair)?;
        let mask = match mode {
            ScoreMode::Infer => None,
            ScoreMode::Train(rng) if self.dropout > 0.0 => Some(self.dropout_mask(rng)),
            ScoreMode::Train(_) => None,
        };
        Ok(transformer::forward(
            &self.config,
            &self.layout,
            &self.params,
            &pair.token_ids,
            &pair.type_ids,
            mask.as_deref(),
        ))
    }

    /// Adds `dscore` times the parameter gradient of the score to `grad`.
    pub fn backward(&self, acts: &Activations, dscore: f64, grad: &mut [f64]) {
        transformer::backward(&self.config, &self.layout, &self.params, acts, dscore, grad);
    }

    /// Infer-mode scores, in input order.
    pub fn score_batch(&self, pairs: &[EncodedPair]) -> Result<Vec<f64>, EncoderError> {
        pairs
            .par_iter()
            .enumerate()
            .map(|(index, p)| {
                self.score(p, ScoreMode::Infer).map_err(|e| EncoderError::Batch { index, source: Box::new(e) })
            })
            .collect()
    }
}

fn init_head(layout: &Layout, params: &mut [f64], head: HeadInit) {
    let range = layout.head_range();
    params[range.clone()].fill(0.0);
    if let HeadInit::SmallUniform(a) = head {
        let mut rng = ChaCha8Rng::seed_from_u64(HEAD_INIT_SEED);
        let w = layout.tensor("head.weight").expect("head present").range();
        for v in &mut params[w] {
            *v = rand::Rng::random_range(&mut rng, -a..=a);
        }
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn words(prefix: &str, n: usize) -> String {
        (0..n).map(|i| format!("{prefix}{i}")).collect::<Vec<_>>().join(" ")
    }

    fn tokenizer_for(texts: &[&str]) -> Tokenizer {
        Tokenizer::build_word(texts.iter().copied(), 1, usize::MAX)
    }

    #[test]
    fn short_pair_is_not_truncated_and_keeps_field_order() {
        let seed = Paper::new("s", "graph networks", "we study graphs .");
        let cand = Paper::new("c", "citation models", "we model citations .");
        let tok = tokenizer_for(&["graph networks we study graphs . citation models model citations"]);
        let pair = encode_pair(&seed, &cand, &tok, DEFAULT_MAX_TOKENS).unwrap();
        assert_eq!(pair.truncation_report, TruncationReport::default());
        assert_eq!(
            pair.decode(&tok),
            "[CLS] graph networks [SEP] we study graphs . [SEP] citation models [SEP] we model citations . [SEP]"
        );
        assert_eq!(pair.type_ids.iter().filter(|&&t| t == 0).count(), 1 + 2 + 1 + 4 + 1);
    }

    #[test]
    fn longer_abstract_is_trimmed_first() {
        // 18 + 17 title tokens and 5 structural tokens leave 472 for abstracts.
        let seed = Paper::new("s", words("st", 18), words("sa", 400));
        let cand = Paper::new("c", words("ct", 17), words("ca", 300));
        let all = [seed.title.as_str(), &seed.abstract_text, &cand.title, &cand.abstract_text].join(" ");
        let tok = tokenizer_for(&[&all]);
        let pair = encode_pair(&seed, &cand, &tok, 512).unwrap();
        assert_eq!(pair.len(), 512);
        assert_eq!(pair.truncation_report.total(), 228);
        assert_eq!(pair.segment_layout.seed_abstract.len(), 236);
        assert_eq!(pair.segment_layout.candidate_abstract.len(), 236);
        assert_eq!(pair.segment_layout.seed_title.len(), 18);
        assert_eq!(pair.segment_layout.candidate_title.len(), 17);
        let text = pair.decode_fields(&tok);
        assert!(text.seed_abstract.ends_with("sa235"));
        assert!(text.candidate_abstract.ends_with("ca235"));
    }

    #[test]
    fn titles_over_budget_is_an_error() {
        let seed = Paper::new("s", words("t", 10), "a");
        let cand = Paper::new("c", words("u", 10), "b");
        let tok = tokenizer_for(&[&seed.title, &cand.title]);
        let err = encode_pair(&seed, &cand, &tok, 24).unwrap_err();
        assert!(matches!(err, EncoderError::TitlesExceedBudget { needed: 25, budget: 24 }));
        assert!(encode_pair(&seed, &cand, &tok, 25).is_ok());
    }

    fn small_model(head: HeadInit) -> FacetModel {
        let tok = Arc::new(tokenizer_for(&["alpha beta gamma delta epsilon zeta eta theta"]));
        let mut cfg = TransformerConfig::compact(tok.vocab_size(), 64);
        cfg.hidden = 16;
        cfg.heads = 2;
        cfg.ffn = 32;
        FacetModel::compact_with(Facet::Background, tok, 64, cfg, 7, head).unwrap()
    }

    #[test]
    fn zero_head_scores_exactly_zero() {
        let model = small_model(HeadInit::Zero);
        let pair = model
            .encode(&Paper::new("s", "alpha", "beta gamma"), &Paper::new("c", "delta", "eta theta"))
            .unwrap();
        assert_eq!(model.score(&pair, ScoreMode::Infer).unwrap(), 0.0);
    }

    #[test]
    fn infer_is_deterministic_and_train_applies_dropout() {
        let model = small_model(HeadInit::SmallUniform(0.5));
        let pair = model
            .encode(&Paper::new("s", "alpha beta", "gamma delta"), &Paper::new("c", "epsilon", "zeta eta"))
            .unwrap();
        let a = model.score(&pair, ScoreMode::Infer).unwrap();
        assert_eq!(a, model.score(&pair, ScoreMode::Infer).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trained: Vec<f64> = (0..8).map(|_| model.score(&pair, ScoreMode::Train(&mut rng)).unwrap()).collect();
        assert!(trained.iter().any(|&s| s != a));
    }

    #[test]
    fn tokenizer_mismatch_is_rejected() {
        let model = small_model(HeadInit::Zero);
        let other = tokenizer_for(&["alpha"]);
        let pair = encode_pair(&Paper::new("s", "alpha", "alpha"), &Paper::new("c", "alpha", "alpha"), &other, 64).unwrap();
        assert!(matches!(model.score(&pair, ScoreMode::Infer), Err(EncoderError::TokenizerMismatch { .. })));
        let err = model.score_batch(&[pair]).unwrap_err();
        assert!(matches!(err, EncoderError::Batch { index: 0, .. }));
    }

    #[test]
    fn batch_matches_loop_and_empty_batch_is_empty() {
        let model = small_model(HeadInit::SmallUniform(0.5));
        let texts = ["alpha beta", "gamma", "delta epsilon zeta", "eta", "theta alpha"];
        let pairs: Vec<EncodedPair> = (0..10)
            .map(|i| {
                let s = Paper::new("s", texts[i % 5], texts[(i + 1) % 5]);
                let c = Paper::new("c", texts[(i + 2) % 5], texts[(i * 3) % 5]);
                model.encode(&s, &c).unwrap()
            })
            .collect();
        let batch = model.score_batch(&pairs).unwrap();
        for (p, b) in pairs.iter().zip(&batch) {
            let s = model.score(p, ScoreMode::Infer).unwrap();
            assert!((s - b).abs() <= 1e-6 * s.abs().max(1e-12));
        }
        assert_eq!(model.score_batch(&pairs[..1]).unwrap(), vec![model.score(&pairs[0], ScoreMode::Infer).unwrap()]);
        assert!(model.score_batch(&[]).unwrap().is_empty());
    }

    #[test]
    fn head_init_is_reproducible() {
        let a = small_model(HeadInit::SmallUniform(HEAD_INIT_SCALE));
        let b = small_model(HeadInit::SmallUniform(HEAD_INIT_SCALE));
        assert_eq!(a.params(), b.params());
        let head = a.layout().tensor("head.weight").unwrap().range();
        assert!(a.params()[head].iter().all(|w| w.abs() <= HEAD_INIT_SCALE));
        assert_eq!(a.params()[a.layout().tensor("head.bias").unwrap().offset], 0.0);
    }

    proptest! {
        #[test]
        fn truncation_accounts_for_every_dropped_token(
            sa in 0usize..60, ca in 0usize..60, st in 0usize..6, ct in 0usize..6, budget in 17usize..90,
        ) {
            let seed = Paper::new("s", words("t", st), words("a", sa));
            let cand = Paper::new("c", words("u", ct), words("b", ca));
            let all = [seed.title.as_str(), &seed.abstract_text, &cand.title, &cand.abstract_text].join(" ");
            let tok = tokenizer_for(&[&all]);
            let pair = encode_pair(&seed, &cand, &tok, budget).unwrap();
            let full = st + ct + sa + ca + STRUCTURAL_TOKENS;
            prop_assert!(pair.len() <= budget);
            prop_assert_eq!(pair.truncation_report.total(), full - pair.len());
            prop_assert_eq!(pair.segment_layout.seed_title.len(), st);
            prop_assert_eq!(pair.segment_layout.candidate_title.len(), ct);
            prop_assert_eq!(pair.truncation_report.seed_title + pair.truncation_report.candidate_title, 0);
            // Decoding and re-encoding reproduces the pair.
            let again = encode_text(&pair.decode_fields(&tok), &tok, budget).unwrap();
            prop_assert_eq!(&again.token_ids, &pair.token_ids);
            prop_assert_eq!(&again.segment_layout, &pair.segment_layout);
            let again2 = encode_text(&again.decode_fields(&tok), &tok, budget).unwrap();
            prop_assert_eq!(again2, again);
        }
    }
}
