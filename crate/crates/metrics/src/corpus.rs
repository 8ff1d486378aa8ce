use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use salcap::vocab::tokenize;
use serde::Deserialize;

use crate::error::{MetricsError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusEntry {
    pub image_id: String,
    pub candidate: Vec<String>,
    pub references: Vec<Vec<String>>,
}

/// Candidates paired with their references, one entry per image.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionCorpus {
    entries: Vec<CorpusEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CorpusLine {
    image_id: String,
    candidate: String,
    references: Vec<String>,
}

#[derive(Deserialize)]
struct CaptionLine {
    image_id: String,
    caption: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReferenceLine {
    image_id: String,
    references: Vec<String>,
}

fn parse_jsonl<T: serde::de::DeserializeOwned>(text: &str, path: &Path) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| MetricsError::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Reads `{"image_id", "caption"}` lines into an ordered id -> caption map.
pub fn read_captions(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, line) in parse_jsonl::<CaptionLine>(&read(path)?, path)?.into_iter().enumerate() {
        if out.insert(line.image_id.clone(), line.caption).is_some() {
            return Err(MetricsError::Parse {
                path: path.to_path_buf(),
                line: k + 1,
                message: format!("duplicate image_id `{}`", line.image_id),
            });
        }
    }
    Ok(out)
}

impl CaptionCorpus {
    pub fn new(entries: Vec<CorpusEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.image_id.as_str()) {
                return Err(MetricsError::Argument(format!("duplicate image_id `{}`", e.image_id)));
            }
            if e.references.is_empty() {
                return Err(MetricsError::Argument(format!("`{}` has no references", e.image_id)));
            }
        }
        Ok(CaptionCorpus { entries })
    }

    /// Tokenizes raw sentences.
    pub fn from_sentences<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, S, Vec<S>)>,
        S: AsRef<str>,
    {
        Self::new(
            items
                .into_iter()
                .map(|(image_id, cand, refs)| CorpusEntry {
                    image_id,
                    candidate: tokenize(cand.as_ref()),
                    references: refs.iter().map(|r| tokenize(r.as_ref())).collect(),
                })
                .collect(),
        )
    }

    /// `{"image_id", "candidate", "references"}` lines.
    pub fn from_jsonl(text: &str, origin: &Path) -> Result<Self> {
        let lines: Vec<CorpusLine> = parse_jsonl(text, origin)?;
        Self::from_sentences(lines.into_iter().map(|l| (l.image_id, l.candidate, l.references)))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&read(path)?, path)
    }

    /// Joins a `{"image_id", "caption"}` candidate file with a
    /// `{"image_id", "references"}` file. Both must cover the same ids.
    pub fn join_files(candidates: &Path, references: &Path) -> Result<Self> {
        let cands = read_captions(candidates)?;
        let refs: Vec<ReferenceLine> = parse_jsonl(&read(references)?, references)?;
        let mut by_id = BTreeMap::new();
        for r in refs {
            let id = r.image_id.clone();
            if by_id.insert(id.clone(), r.references).is_some() {
                return Err(MetricsError::Argument(format!(
                    "{}: duplicate image_id `{id}`",
                    references.display()
                )));
            }
        }
        if let Some(id) = cands.keys().find(|id| !by_id.contains_key(*id)) {
            return Err(MetricsError::Argument(format!("candidate `{id}` has no references")));
        }
        if let Some(id) = by_id.keys().find(|id| !cands.contains_key(*id)) {
            return Err(MetricsError::Argument(format!(
                "references for `{id}` have no candidate"
            )));
        }
        Self::from_sentences(cands.into_iter().map(|(id, c)| {
            let refs = by_id.remove(&id).expect("checked above");
            (id, c, refs)
        }))
    }

    pub fn entries(&self) -> &[CorpusEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn candidates(&self) -> impl Iterator<Item = &[String]> {
        self.entries.iter().map(|e| e.candidate.as_slice())
    }
}
