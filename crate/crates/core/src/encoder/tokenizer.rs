//! Word-level and WordPiece tokenizers.
//!
//! Vocabulary files hold one token per line; a token's id is its line
//! number (0-based). For word-level vocabularies built from a corpus the
//! order after the special tokens is frequency rank (ties alphabetical).

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::io::{sha256_hex, IoError};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
const SPECIALS: [&str; 4] = [PAD, UNK, CLS, SEP];

#[derive(Debug, thiserror::Error)]
pub enum TokenizerError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error("vocabulary is missing required token {0}")]
    MissingSpecial(&'static str),
    #[error("vocabulary has duplicate token `{0}`")]
    Duplicate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenizerKind {
    Word,
    WordPiece,
}

#[derive(Debug, Clone, PartialEq)]
struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn new(tokens: Vec<String>) -> Result<Self, TokenizerError> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(TokenizerError::Duplicate(t.clone()));
            }
        }
        for s in [UNK, CLS, SEP] {
            if !index.contains_key(s) {
                return Err(TokenizerError::MissingSpecial(s));
            }
        }
        Ok(Self { tokens, index })
    }

    fn id(&self, tok: &str) -> Option<u32> {
        self.index.get(tok).copied()
    }
}

/// Tokenizer with a fixed vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Tokenizer {
    kind: TokenizerKind,
    vocab: Vocab,
    id: String,
    unk: u32,
    cls: u32,
    sep: u32,
}

/// Lowercased words, single punctuation marks and literal special tokens.
fn pre_tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '[' {
            if let Some(special) = SPECIALS.iter().find(|s| rest.starts_with(**s)) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(special.to_string());
                rest = &rest[special.len()..];
                continue;
            }
        }
        if c.is_alphanumeric() {
            word.extend(c.to_lowercase());
        } else {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            if !c.is_whitespace() && !c.is_control() {
                out.push(c.to_string());
            }
        }
        rest = &rest[c.len_utf8()..];
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

impl Tokenizer {
    fn from_vocab(kind: TokenizerKind, vocab: Vocab) -> Self {
        let digest = sha256_hex(vocab.tokens.join("\n").as_bytes());
        let prefix = match kind {
            TokenizerKind::Word => "word",
            TokenizerKind::WordPiece => "wordpiece",
        };
        let unk = vocab.id(UNK).expect("checked");
        let cls = vocab.id(CLS).expect("checked");
        let sep = vocab.id(SEP).expect("checked");
        Self {
            kind,
            id: format!("{prefix}-{}", &digest[..16]),
            vocab,
            unk,
            cls,
            sep,
        }
    }

    /// Word-level vocabulary from a corpus: words seen at least `min_count`
    /// times, most frequent first, capped at `max_size` entries in total.
    pub fn build_word<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize, max_size: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for w in pre_tokenize(t) {
                if !SPECIALS.contains(&w.as_str()) {
                    *counts.entry(w).or_default() += 1;
                }
            }
        }
        let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_count.max(1)).collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words.into_iter().map(|(w, _)| w).take(max_size.saturating_sub(SPECIALS.len())));
        Self::from_vocab(TokenizerKind::Word, Vocab::new(tokens).expect("specials present"))
    }

    pub fn from_tokens(kind: TokenizerKind, tokens: Vec<String>) -> Result<Self, TokenizerError> {
        Ok(Self::from_vocab(kind, Vocab::new(tokens)?))
    }

    pub fn load(kind: TokenizerKind, path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
        let tokens = text.lines().map(|l| l.trim_end_matches('\r').to_string()).collect();
        Self::from_tokens(kind, tokens)
    }

    pub fn save(&self, path: &Path) -> Result<(), TokenizerError> {
        let mut text = self.vocab.tokens.join("\n");
        text.push('\n');
        crate::io::ensure_parent(path)?;
        fs::write(path, text).map_err(|e| IoError::io(path, e))?;
        Ok(())
    }

    pub fn kind(&self) -> TokenizerKind {
        self.kind
    }

    /// Content-derived identifier; models only accept pairs encoded with
    /// the tokenizer they were trained with.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.tokens.len()
    }

    pub fn cls_id(&self) -> u32 {
        self.cls
    }

    pub fn sep_id(&self) -> u32 {
        self.sep
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.vocab.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokenize(&self, text: &str) -> Vec<u32> {
        let words = pre_tokenize(text);
        match self.kind {
            TokenizerKind::Word => words.iter().map(|w| self.vocab.id(w).unwrap_or(self.unk)).collect(),
            TokenizerKind::WordPiece => words.iter().flat_map(|w| self.word_pieces(w)).collect(),
        }
    }

    /// Greedy longest-match-first split of one word.
    fn word_pieces(&self, word: &str) -> Vec<u32> {
        if let Some(id) = self.vocab.id(word) {
            return vec![id];
        }
        if word.chars().count() > 100 {
            return vec![self.unk];
        }
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut end = chars.len();
            let mut found = None;
            while start < end {
                let mut sub: String = chars[start..end].iter().collect();
                if start > 0 {
                    sub.insert_str(0, "##");
                }
                if let Some(id) = self.vocab.id(&sub) {
                    found = Some(id);
                    break;
                }
                end -= 1;
            }
            match found {
                Some(id) => {
                    pieces.push(id);
                    start = end;
                }
                None => return vec![self.unk],
            }
        }
        pieces
    }

    /// Space-joined tokens; WordPiece continuations are glued back on.
    pub fn decode(&self, ids: &[u32]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id).unwrap_or(UNK);
            match (self.kind, tok.strip_prefix("##")) {
                (TokenizerKind::WordPiece, Some(rest)) if !out.is_empty() => out.push_str(rest),
                _ => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(tok);
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pre_tokenizer_splits_punctuation_and_keeps_specials() {
        assert_eq!(
            pre_tokenize("GCN-based [UNK] models, (v2)!"),
            ["gcn", "-", "based", "[UNK]", "models", ",", "(", "v2", ")", "!"]
        );
    }

    #[test]
    fn word_vocab_orders_by_frequency() {
        let tok = Tokenizer::build_word(["b a a", "c b a"], 1, 100);
        assert_eq!(tok.token(4), Some("a"));
        assert_eq!(tok.token(5), Some("b"));
        assert_eq!(tok.token(6), Some("c"));
        assert_eq!(tok.tokenize("A z"), vec![4, 1]);
        assert_eq!(tok.decode(&tok.tokenize("a z")), "a [UNK]");
        let capped = Tokenizer::build_word(["b a a", "c b a"], 2, 100);
        assert_eq!(capped.vocab_size(), 6);
    }

    #[test]
    fn vocab_file_round_trip_preserves_id() {
        let tok = Tokenizer::build_word(["graph neural network", "neural network"], 1, 100);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vocab.txt");
        tok.save(&path).unwrap();
        let back = Tokenizer::load(TokenizerKind::Word, &path).unwrap();
        assert_eq!(back, tok);
        assert_eq!(back.id(), tok.id());
    }

    #[test]
    fn wordpiece_greedy_longest_match() {
        let tokens = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "graph", "##sage", "##s", "un", "##aff", "##able", "."]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let tok = Tokenizer::from_tokens(TokenizerKind::WordPiece, tokens).unwrap();
        assert_eq!(tok.tokenize("GraphSAGE unaffable."), vec![4, 5, 7, 8, 9, 10]);
        assert_eq!(tok.tokenize("xyz"), vec![1]);
        assert_eq!(tok.decode(&[4, 5, 10]), "graphsage .");
    }

    #[test]
    fn missing_specials_rejected() {
        let err = Tokenizer::from_tokens(TokenizerKind::Word, vec!["a".into()]).unwrap_err();
        assert!(matches!(err, TokenizerError::MissingSpecial(_)));
    }
}
