//! WordPiece tokenization (inference only): lowercase, split on whitespace
//! and punctuation, then greedy longest-match against a fixed vocabulary
//! with `##` continuation pieces. Unknown words map whole to `[UNK]`.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const PAD_TOKEN: &str = "[PAD]";
pub const UNK_TOKEN: &str = "[UNK]";
pub const MASK_TOKEN: &str = "[MASK]";

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const MASK_ID: usize = 2;

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Build from an ordered token list. Indices 0..2 must be the special
    /// tokens `[PAD]`, `[UNK]`, `[MASK]`; entries must be unique; V >= 4.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 4 {
            return Err(Error::Validation(format!(
                "vocabulary needs at least 4 tokens, got {}",
                tokens.len()
            )));
        }
        for (id, expect) in [(PAD_ID, PAD_TOKEN), (UNK_ID, UNK_TOKEN), (MASK_ID, MASK_TOKEN)] {
            if tokens[id] != expect {
                return Err(Error::Validation(format!(
                    "vocabulary line {id} must be {expect}, got {:?}",
                    tokens[id]
                )));
            }
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Convenience constructor that prepends the three special tokens.
    pub fn with_specials(words: &[&str]) -> Result<Self> {
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string(), MASK_TOKEN.to_string()];
        tokens.extend(words.iter().map(|w| w.to_string()));
        Vocabulary::new(tokens)
    }

    /// One token per line, line number = index.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        Vocabulary::new(tokens)
    }

    pub fn to_file(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn id_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Tokenize a report. Deterministic and pure; empty or all-unmatched
    /// whitespace text yields an empty sequence.
    pub fn tokenize(&self, text: &str) -> Vec<usize> {
        let mut ids = Vec::new();
        for word in split_words(text) {
            match self.wordpiece(&word) {
                Some(pieces) => ids.extend(pieces),
                None => ids.push(UNK_ID),
            }
        }
        ids
    }

    /// Greedy longest-match segmentation of a single normalized word.
    /// Returns None when any remainder has no vocabulary match.
    fn wordpiece(&self, word: &str) -> Option<Vec<usize>> {
        let chars: Vec<char> = word.chars().collect();
        let mut pieces = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut matched = None;
            let mut end = chars.len();
            while end > start {
                let mut piece: String = chars[start..end].iter().collect();
                if start > 0 {
                    piece.insert_str(0, "##");
                }
                if let Some(&id) = self.index.get(&piece) {
                    matched = Some((id, end));
                    break;
                }
                end -= 1;
            }
            let (id, end) = matched?;
            pieces.push(id);
            start = end;
        }
        Some(pieces)
    }

    /// Join tokens back into text: continuation pieces attach to the
    /// previous piece, everything else is space-separated.
    pub fn detokenize(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            let tok = self.token(id);
            if let Some(cont) = tok.strip_prefix("##") {
                out.push_str(cont);
            } else {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(tok);
            }
        }
        out
    }
}

/// Lowercase and split into words; each punctuation character becomes its
/// own word.
fn split_words(text: &str) -> Vec<String> {
    let mut words = Vec::new();
    let mut current = String::new();
    for c in text.chars().flat_map(|c| c.to_lowercase()) {
        if c.is_whitespace() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
        } else if c.is_ascii_punctuation() {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
    words
}
