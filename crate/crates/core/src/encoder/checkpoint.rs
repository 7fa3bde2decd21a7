//! Checkpoint directories.
//!
//! ```text
//! <dir>/manifest.json   facet, profile, tokenizer, architecture, hashes, metrics
//! <dir>/params.bin      parameters as little-endian f64, layout order
//! <dir>/vocab.txt       tokenizer vocabulary, one token per line, id = line number
//! ```

use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{BackboneProfile, EncoderError, FacetModel, Tokenizer, TokenizerError, TokenizerKind, TransformerConfig};
use crate::facet::Facet;
use crate::io::{read_json, sha256_hex, write_json, IoError};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] EncoderError),
    #[error("unsupported checkpoint format version {0}")]
    Version(u32),
    #[error("{path}: parameter file is corrupt: {reason}")]
    Corrupt { path: String, reason: String },
    #[error("checkpoint tokenizer {found} does not match manifest {expected}")]
    TokenizerMismatch { expected: String, found: String },
}

/// How a checkpoint came to be. Contains no wall-clock data so that
/// identical training runs write identical manifests.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreationMetadata {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rng_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epoch: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl CreationMetadata {
    pub fn new() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub facet: Facet,
    pub backbone_profile: BackboneProfile,
    pub tokenizer_id: String,
    pub tokenizer_kind: TokenizerKind,
    pub max_tokens: usize,
    pub dropout: f64,
    pub architecture: TransformerConfig,
    pub parameter_count: usize,
    pub parameters_sha256: String,
    pub created: CreationMetadata,
    /// Rank agreement of the saved parameters on validation seeds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_metric: Option<f64>,
    /// Validation metric after every epoch, in order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub validation_history: Vec<f64>,
}

fn params_bytes(params: &[f64]) -> Vec<u8> {
    params.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn save(
    model: &FacetModel,
    dir: &Path,
    created: CreationMetadata,
    validation_metric: Option<f64>,
    validation_history: Vec<f64>,
) -> Result<CheckpointManifest, CheckpointError> {
    fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let bytes = params_bytes(model.params());
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        facet: model.facet(),
        backbone_profile: model.profile(),
        tokenizer_id: model.tokenizer_id().to_string(),
        tokenizer_kind: model.tokenizer().kind(),
        max_tokens: model.max_tokens(),
        dropout: model.dropout(),
        architecture: model.config().clone(),
        parameter_count: model.params().len(),
        parameters_sha256: sha256_hex(&bytes),
        created,
        validation_metric,
        validation_history,
    };
    let params_path = dir.join(PARAMS_FILE);
    fs::write(&params_path, &bytes).map_err(|e| IoError::io(&params_path, e))?;
    model.tokenizer().save(&dir.join(VOCAB_FILE))?;
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest, CheckpointError> {
    let manifest: CheckpointManifest = read_json(&dir.join(MANIFEST_FILE))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(CheckpointError::Version(manifest.format_version));
    }
    Ok(manifest)
}

pub fn load(dir: &Path) -> Result<(FacetModel, CheckpointManifest), CheckpointError> {
    let manifest = read_manifest(dir)?;
    let tokenizer = Tokenizer::load(manifest.tokenizer_kind, &dir.join(VOCAB_FILE))?;
    if tokenizer.id() != manifest.tokenizer_id {
        return Err(CheckpointError::TokenizerMismatch {
            expected: manifest.tokenizer_id.clone(),
            found: tokenizer.id().to_string(),
        });
    }
    let path = dir.join(PARAMS_FILE);
    let bytes = fs::read(&path).map_err(|e| IoError::io(&path, e))?;
    let corrupt = |reason: String| CheckpointError::Corrupt {
        path: path.display().to_string(),
        reason,
    };
    if bytes.len() != manifest.parameter_count * 8 {
        return Err(corrupt(format!(
            "{} bytes, expected {}",
            bytes.len(),
            manifest.parameter_count * 8
        )));
    }
    if sha256_hex(&bytes) != manifest.parameters_sha256 {
        return Err(corrupt("sha256 does not match manifest".into()));
    }
    let params = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    let model = FacetModel::from_parts(
        manifest.facet,
        manifest.backbone_profile,
        manifest.architecture.clone(),
        params,
        manifest.dropout,
        Arc::new(tokenizer),
        manifest.max_tokens,
    )?;
    Ok((model, manifest))
}
