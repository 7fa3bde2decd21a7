//! Loading a BERT-family encoder exported in the Hugging Face layout:
//! `config.json`, `vocab.txt` and `model.safetensors`.
//!
//! Linear weights are stored `[out, in]` and are transposed into the
//! `[in, out]` layout used here. Tensor names may carry a `bert.` prefix.
//! A `classifier` head of output width 1 is used when present; otherwise
//! the head is freshly initialized.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use safetensors::{Dtype, SafeTensors};
use serde::Deserialize;

use super::{
    init_head, BackboneProfile, EncoderError, FacetModel, HeadInit, Layout, NormPlacement, Tokenizer, TokenizerError,
    TokenizerKind, TransformerConfig, DEFAULT_DROPOUT, HEAD_INIT_SCALE,
};
use crate::facet::Facet;
use crate::io::{read_json, IoError};

pub const CONFIG_FILE: &str = "config.json";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const WEIGHTS_FILE: &str = "model.safetensors";

#[derive(Debug, thiserror::Error)]
pub enum PretrainedError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] EncoderError),
    #[error("safetensors: {0}")]
    Safetensors(String),
    #[error("missing tensor `{0}`")]
    MissingTensor(String),
    #[error("tensor `{name}` has shape {found:?}, expected {expected:?}")]
    Shape {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("tensor `{name}` has unsupported dtype {dtype}")]
    Dtype { name: String, dtype: String },
    #[error("unsupported activation `{0}`; only exact gelu is implemented")]
    Activation(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct BertConfig {
    pub vocab_size: usize,
    pub hidden_size: usize,
    pub num_hidden_layers: usize,
    pub num_attention_heads: usize,
    pub intermediate_size: usize,
    pub max_position_embeddings: usize,
    #[serde(default = "default_type_vocab")]
    pub type_vocab_size: usize,
    #[serde(default = "default_eps")]
    pub layer_norm_eps: f64,
    #[serde(default = "default_act")]
    pub hidden_act: String,
}

fn default_type_vocab() -> usize {
    2
}

fn default_eps() -> f64 {
    1e-12
}

fn default_act() -> String {
    "gelu".into()
}

impl BertConfig {
    pub fn to_transformer(&self) -> TransformerConfig {
        TransformerConfig {
            vocab_size: self.vocab_size,
            max_positions: self.max_position_embeddings,
            type_vocab_size: self.type_vocab_size,
            hidden: self.hidden_size,
            heads: self.num_attention_heads,
            ffn: self.intermediate_size,
            layers: self.num_hidden_layers,
            norm: NormPlacement::Post,
            layer_norm_eps: self.layer_norm_eps,
            pooler: true,
        }
    }
}

/// Source name and whether the stored matrix must be transposed.
fn source_name(name: &str) -> Option<(String, bool)> {
    let fixed = match name {
        "embeddings.word" => "embeddings.word_embeddings.weight",
        "embeddings.position" => "embeddings.position_embeddings.weight",
        "embeddings.token_type" => "embeddings.token_type_embeddings.weight",
        "embeddings.norm.gain" => "embeddings.LayerNorm.weight",
        "embeddings.norm.bias" => "embeddings.LayerNorm.bias",
        "pooler.weight" => return Some(("pooler.dense.weight".into(), true)),
        "pooler.bias" => "pooler.dense.bias",
        _ => "",
    };
    if !fixed.is_empty() {
        return Some((fixed.into(), false));
    }
    let rest = name.strip_prefix("layer")?;
    let (idx, field) = rest.split_once('.')?;
    let (src, transpose) = match field {
        "attn.query.weight" => ("attention.self.query.weight", true),
        "attn.query.bias" => ("attention.self.query.bias", false),
        "attn.key.weight" => ("attention.self.key.weight", true),
        "attn.key.bias" => ("attention.self.key.bias", false),
        "attn.value.weight" => ("attention.self.value.weight", true),
        "attn.value.bias" => ("attention.self.value.bias", false),
        "attn.output.weight" => ("attention.output.dense.weight", true),
        "attn.output.bias" => ("attention.output.dense.bias", false),
        "norm1.gain" => ("attention.output.LayerNorm.weight", false),
        "norm1.bias" => ("attention.output.LayerNorm.bias", false),
        "ffn.in.weight" => ("intermediate.dense.weight", true),
        "ffn.in.bias" => ("intermediate.dense.bias", false),
        "ffn.out.weight" => ("output.dense.weight", true),
        "ffn.out.bias" => ("output.dense.bias", false),
        "norm2.gain" => ("output.LayerNorm.weight", false),
        "norm2.bias" => ("output.LayerNorm.bias", false),
        _ => return None,
    };
    Some((format!("encoder.layer.{idx}.{src}"), transpose))
}

/// Older exports name LayerNorm parameters gamma/beta.
fn aliases(name: &str) -> Vec<String> {
    let mut out = vec![name.to_string()];
    if let Some(base) = name.strip_suffix("LayerNorm.weight") {
        out.push(format!("{base}LayerNorm.gamma"));
    }
    if let Some(base) = name.strip_suffix("LayerNorm.bias") {
        out.push(format!("{base}LayerNorm.beta"));
    }
    out.into_iter().flat_map(|n| [format!("bert.{n}"), n]).collect()
}

fn to_f64(name: &str, dtype: Dtype, data: &[u8]) -> Result<Vec<f64>, PretrainedError> {
    Ok(match dtype {
        Dtype::F64 => data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect(),
        Dtype::F32 => data
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
        Dtype::BF16 => data
            .chunks_exact(2)
            .map(|c| f32::from_bits((u16::from_le_bytes([c[0], c[1]]) as u32) << 16) as f64)
            .collect(),
        other => {
            return Err(PretrainedError::Dtype {
                name: name.into(),
                dtype: format!("{other:?}"),
            })
        }
    })
}

struct Weights<'a> {
    st: SafeTensors<'a>,
}

impl Weights<'_> {
    fn find(&self, name: &str) -> Option<(String, Vec<usize>, Vec<f64>)> {
        for candidate in aliases(name) {
            if let Ok(view) = self.st.tensor(&candidate) {
                let values = to_f64(&candidate, view.dtype(), view.data()).ok()?;
                return Some((candidate, view.shape().to_vec(), values));
            }
        }
        None
    }

    fn get(&self, name: &str) -> Result<(Vec<usize>, Vec<f64>), PretrainedError> {
        for candidate in aliases(name) {
            if let Ok(view) = self.st.tensor(&candidate) {
                let values = to_f64(&candidate, view.dtype(), view.data())?;
                return Ok((view.shape().to_vec(), values));
            }
        }
        Err(PretrainedError::MissingTensor(name.to_string()))
    }
}

fn transpose(values: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = values[r * cols + c];
        }
    }
    out
}

/// Loads a pretrained encoder for `facet`, with a WordPiece tokenizer from
/// the same directory.
pub fn load_bert(dir: &Path, facet: Facet, max_tokens: usize) -> Result<FacetModel, PretrainedError> {
    let bert: BertConfig = read_json(&dir.join(CONFIG_FILE))?;
    if bert.hidden_act != "gelu" {
        return Err(PretrainedError::Activation(bert.hidden_act));
    }
    let config = bert.to_transformer();
    let tokenizer = Tokenizer::load(TokenizerKind::WordPiece, &dir.join(VOCAB_FILE))?;
    let path = dir.join(WEIGHTS_FILE);
    let bytes = fs::read(&path).map_err(|e| IoError::io(&path, e))?;
    let weights = Weights {
        st: SafeTensors::deserialize(&bytes).map_err(|e| PretrainedError::Safetensors(e.to_string()))?,
    };

    let layout = Layout::new(&config);
    let mut params = vec![0.0; layout.total()];
    let mut head_found = false;
    for spec in layout.tensors() {
        if spec.name.starts_with("head.") {
            continue;
        }
        let (src, needs_transpose) = source_name(&spec.name).expect("every backbone tensor has a source");
        let (shape, values) = weights.get(&src)?;
        let expected: Vec<usize> = if needs_transpose {
            spec.shape.iter().rev().copied().collect()
        } else {
            spec.shape.clone()
        };
        if shape != expected {
            return Err(PretrainedError::Shape { name: src, found: shape, expected });
        }
        let values = if needs_transpose {
            transpose(&values, expected[0], expected[1])
        } else {
            values
        };
        params[spec.range()].copy_from_slice(&values);
    }
    if let (Some((_, ws, w)), Some((_, bs, b))) = (weights.find("classifier.weight"), weights.find("classifier.bias")) {
        if ws == [1, config.hidden] && bs == [1] {
            let head = layout.tensor("head.weight").expect("head").range();
            params[head].copy_from_slice(&w);
            params[layout.tensor("head.bias").expect("head").offset] = b[0];
            head_found = true;
        }
    }
    if !head_found {
        init_head(&layout, &mut params, HeadInit::SmallUniform(HEAD_INIT_SCALE));
    }
    Ok(FacetModel::from_parts(
        facet,
        BackboneProfile::PretrainedScientific,
        config,
        params,
        DEFAULT_DROPOUT,
        Arc::new(tokenizer),
        max_tokens,
    )?)
}

/// Names of all tensors in a safetensors file, for diagnostics.
pub fn tensor_names(path: &Path) -> Result<Vec<String>, PretrainedError> {
    let bytes = fs::read(path).map_err(|e| IoError::io(path, e))?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| PretrainedError::Safetensors(e.to_string()))?;
    let mut names: Vec<String> = st.names().into_iter().map(String::from).collect();
    names.sort();
    Ok(names)
}
