use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::TokenSeq;

pub const PAD: u32 = 0;
pub const OOV: u32 = 1;

const PAD_TEXT: &str = "<pad>";
const OOV_TEXT: &str = "<oov>";

/// Token to index map. Serialized as the list of tokens in index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < 2 || tokens[0] != PAD_TEXT || tokens[1] != OOV_TEXT {
            return Err("vocabulary must start with <pad>, <oov>".into());
        }
        let index: HashMap<String, u32> = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        if index.len() != tokens.len() {
            return Err("duplicate vocabulary entry".into());
        }
        Ok(Vocab { tokens, index })
    }

    /// Tokens seen at least `min_count` times, most frequent first, ties by
    /// text.
    pub fn build<'a>(seqs: impl IntoIterator<Item = &'a TokenSeq>, min_count: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in seqs {
            for t in &s.tokens {
                *counts.entry(t.text.as_str()).or_default() += 1;
            }
        }
        let mut kept: Vec<(&str, usize)> = counts.into_iter().filter(|&(_, c)| c >= min_count.max(1)).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = [PAD_TEXT, OOV_TEXT].into_iter().chain(kept.into_iter().map(|(t, _)| t)).map(String::from).collect();
        Vocab::from_tokens(tokens).expect("reserved entries present")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn get(&self, token: &str) -> u32 {
        match token {
            PAD_TEXT => OOV,
            t => self.index.get(t).copied().unwrap_or(OOV),
        }
    }

    pub fn token(&self, index: u32) -> Option<&str> {
        self.tokens.get(index as usize).map(String::as_str)
    }

    /// Indices of the first `len` tokens, padded with PAD to `len`.
    pub fn encode(&self, seq: &TokenSeq, len: usize) -> Vec<u32> {
        let mut out: Vec<u32> = seq.tokens.iter().take(len).map(|t| self.get(&t.text)).collect();
        out.resize(len, PAD);
        out
    }
}

impl Serialize for Vocab {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.tokens.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Vocab {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vocab::from_tokens(Vec::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}
