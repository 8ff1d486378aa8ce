use std::collections::{BTreeMap, HashSet};

use serde::Serialize;

use crate::error::{MetricsError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiversityStats {
    /// Distinct unigrams over total words.
    pub div1: f64,
    /// Distinct bigrams over total words.
    pub div2: f64,
    pub vocab_size: usize,
}

/// Corpus-level diversity of a set of tokenized captions. A set without
/// words scores 0.
pub fn diversity_stats<S: AsRef<[String]>>(captions: &[S]) -> DiversityStats {
    let words: usize = captions.iter().map(|c| c.as_ref().len()).sum();
    if words == 0 {
        return DiversityStats {
            div1: 0.0,
            div2: 0.0,
            vocab_size: 0,
        };
    }
    let unigrams: HashSet<&String> = captions.iter().flat_map(|c| c.as_ref()).collect();
    let bigrams: HashSet<&[String]> = captions.iter().flat_map(|c| c.as_ref().windows(2)).collect();
    DiversityStats {
        div1: unigrams.len() as f64 / words as f64,
        div2: bigrams.len() as f64 / words as f64,
        vocab_size: unigrams.len(),
    }
}

/// Percentage of generated captions absent from the training captions.
/// Captions are compared as whitespace-joined token strings.
pub fn novelty_pct<S: AsRef<[String]>, T: AsRef<[String]>>(generated: &[S], training: &[T]) -> Result<f64> {
    if generated.is_empty() {
        return Err(MetricsError::Argument("no generated captions".into()));
    }
    let seen: HashSet<String> = training.iter().map(|t| t.as_ref().join(" ")).collect();
    let novel = generated
        .iter()
        .filter(|g| !seen.contains(&g.as_ref().join(" ")))
        .count();
    Ok(100.0 * novel as f64 / generated.len() as f64)
}

/// Percentage of images captioned differently by two systems.
pub fn difference_pct(a: &BTreeMap<String, Vec<String>>, b: &BTreeMap<String, Vec<String>>) -> Result<f64> {
    if a.len() != b.len() || a.keys().any(|k| !b.contains_key(k)) {
        return Err(MetricsError::Argument("caption sets cover different image ids".into()));
    }
    if a.is_empty() {
        return Err(MetricsError::Argument("no captions to compare".into()));
    }
    let differ = a.iter().filter(|(k, v)| b[*k] != **v).count();
    Ok(100.0 * differ as f64 / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn diversity_examples() {
        let d = diversity_stats(&[toks("a b"), toks("a c")]);
        assert_eq!((d.div1, d.div2, d.vocab_size), (0.75, 0.5, 3));
        let d = diversity_stats(&[toks("a")]);
        assert_eq!((d.div1, d.div2), (1.0, 0.0));
        let d = diversity_stats(&[toks(""), toks("")]);
        assert_eq!((d.div1, d.div2, d.vocab_size), (0.0, 0.0, 0));
    }

    #[test]
    fn novelty_examples() {
        let g = [toks("a b"), toks("c"), toks("d e"), toks("f")];
        assert_eq!(novelty_pct(&g, &g).unwrap(), 0.0);
        assert_eq!(novelty_pct(&g, &[toks("x")]).unwrap(), 100.0);
        assert_eq!(novelty_pct(&g, &[toks("c")]).unwrap(), 75.0);
        assert!(novelty_pct::<Vec<String>, Vec<String>>(&[], &[]).is_err());
    }

    #[test]
    fn difference_examples() {
        let m = |v: &[(&str, &str)]| -> BTreeMap<String, Vec<String>> {
            v.iter().map(|(k, c)| (k.to_string(), toks(c))).collect()
        };
        let a = m(&[("1", "a"), ("2", "b"), ("3", "c"), ("4", "d")]);
        assert_eq!(difference_pct(&a, &a).unwrap(), 0.0);
        let b = m(&[("1", "a"), ("2", "b"), ("3", "c"), ("4", "x")]);
        assert_eq!(difference_pct(&a, &b).unwrap(), 25.0);
        let c = m(&[("1", "w"), ("2", "x"), ("3", "y"), ("4", "z")]);
        assert_eq!(difference_pct(&a, &c).unwrap(), 100.0);
        let d = m(&[("1", "a")]);
        assert!(difference_pct(&a, &d).is_err());
    }
}
