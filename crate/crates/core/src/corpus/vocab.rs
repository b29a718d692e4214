use std::collections::HashMap;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use super::{tokenize, CorpusRecord};
use crate::env::BoardDims;
use crate::error::{Error, Result};
use crate::serialize::{input_token_set, SymbolAlphabet};

pub const PAD: usize = 0;
pub const SOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<sos>", "<eos>", "<unk>"];

/// Token/id bijection shared by model inputs and rationale words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved ids followed by `tokens` in order; duplicates are dropped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocabulary { tokens: Vec::new(), index: HashMap::new() };
        for t in RESERVED {
            v.push(t.to_string());
        }
        for t in tokens {
            v.push(t.into());
        }
        v
    }

    fn push(&mut self, token: String) {
        if !self.index.contains_key(&token) {
            self.index.insert(token.clone(), self.tokens.len());
            self.tokens.push(token);
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> Result<&str> {
        self.tokens
            .get(id)
            .map(String::as_str)
            .ok_or(Error::TokenRange { id, size: self.tokens.len() })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// SHA-256 over the ordered token list, hex encoded.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tokens {
            h.update(t.as_bytes());
            h.update([0u8]);
        }
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    pub fn encode<S: AsRef<str>, T: AsRef<str>>(&self, input: &[S], rationale: &[T]) -> TokenizedPair {
        let mut target_ids = Vec::with_capacity(rationale.len() + 2);
        target_ids.push(SOS);
        target_ids.extend(self.encode_tokens(rationale));
        target_ids.push(EOS);
        TokenizedPair { input_ids: self.encode_tokens(input), target_ids }
    }

    /// Joins tokens up to the first EOS, skipping PAD and SOS.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        Ok(self.decode_tokens(ids)?.join(" "))
    }

    pub fn decode_tokens(&self, ids: &[usize]) -> Result<Vec<String>> {
        let mut out = Vec::new();
        for &id in ids {
            let tok = self.token(id)?;
            match id {
                EOS => break,
                PAD | SOS => continue,
                _ => out.push(tok.to_string()),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenizedPair {
    pub input_ids: Vec<usize>,
    /// `SOS, rationale..., EOS`
    pub target_ids: Vec<usize>,
}

/// Reserved ids, then every possible input token for the board, then
/// rationale tokens seen at least `min_freq` times ordered by descending
/// frequency and lexicographically within a frequency.
pub fn build_vocab(
    records: &[CorpusRecord],
    min_freq: usize,
    dims: &BoardDims,
    alphabet: &SymbolAlphabet,
) -> Vocabulary {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for r in records {
        for t in tokenize(&r.rationale) {
            *counts.entry(t).or_insert(0) += 1;
        }
    }
    let mut words: Vec<(String, usize)> = counts.into_iter().filter(|(_, c)| *c >= min_freq.max(1)).collect();
    words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(input_token_set(dims, alphabet).into_iter().chain(words.into_iter().map(|(w, _)| w)))
}
