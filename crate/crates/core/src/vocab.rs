//! Word vocabulary and caption encoding.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];
const PUNCTUATION: &[char] = &['.', ',', ';', ':', '!', '?', '"', '(', ')'];

/// Lowercases, deletes the characters `.,;:!?"()` and splits on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .to_lowercase()
        .replace(PUNCTUATION, "")
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Bijection between corpus words and token ids. Ids 0..4 are reserved for
/// PAD, BOS, EOS and UNK.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    min_count: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    min_count: usize,
    words: Vec<String>,
}

impl Vocabulary {
    /// Keeps words seen at least `min_count` times. Ids follow descending
    /// frequency, ties broken lexicographically.
    pub fn build<S: AsRef<str>>(captions: &[Vec<S>], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::Vocab("min_count must be at least 1".into()));
        }
        if captions.iter().all(|c| c.is_empty()) {
            return Err(Error::Vocab("cannot build a vocabulary from an empty corpus".into()));
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for word in captions.iter().flatten() {
            *counts.entry(word.as_ref()).or_default() += 1;
        }
        let mut kept: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count && !RESERVED.contains(&w))
            .collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        Self::from_words(min_count, kept.into_iter().map(|(w, _)| w.to_owned()).collect())
    }

    fn from_words(min_count: usize, words: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if RESERVED.contains(&w.as_str()) {
                return Err(Error::Vocab(format!("`{w}` collides with a reserved token")));
            }
            if index.insert(w.clone(), i + RESERVED.len()).is_some() {
                return Err(Error::Vocab(format!("duplicate word `{w}`")));
            }
        }
        Ok(Vocabulary {
            min_count,
            words,
            index,
        })
    }

    /// Number of ids including the reserved tokens.
    pub fn len(&self) -> usize {
        self.words.len() + RESERVED.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    /// Corpus words in id order (reserved tokens excluded).
    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        if id < RESERVED.len() {
            Some(RESERVED[id])
        } else {
            self.words.get(id - RESERVED.len()).map(String::as_str)
        }
    }

    /// BOS, one id per token (UNK when unknown), EOS.
    pub fn encode(&self, sentence: &str) -> Vec<usize> {
        let tokens = tokenize(sentence);
        self.encode_tokens(&tokens)
    }

    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        let mut ids = Vec::with_capacity(tokens.len() + 2);
        ids.push(BOS);
        ids.extend(tokens.iter().map(|t| self.id(t.as_ref()).unwrap_or(UNK)));
        ids.push(EOS);
        ids
    }

    /// Space-joined words; PAD, BOS and EOS are dropped and UNK renders as `<unk>`.
    pub fn decode(&self, ids: &[usize]) -> Result<String> {
        let mut out: Vec<&str> = Vec::with_capacity(ids.len());
        for &id in ids {
            match id {
                PAD | BOS | EOS => {}
                _ => out.push(
                    self.word(id)
                        .ok_or_else(|| Error::Vocab(format!("unknown token id {id}")))?,
                ),
            }
        }
        Ok(out.join(" "))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&VocabFile {
            min_count: self.min_count,
            words: self.words.clone(),
        })
        .expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> std::result::Result<Self, serde_json::Error> {
        let f: VocabFile = serde_json::from_str(text)?;
        Self::from_words(f.min_count, f.words).map_err(serde::de::Error::custom)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| Error::json(path, e))
    }
}
