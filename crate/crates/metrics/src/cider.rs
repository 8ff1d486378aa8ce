use std::collections::HashMap;

use crate::corpus::CaptionCorpus;
use crate::error::{MetricsError, Result};
use crate::ngram::{ngrams, Counts};

fn tfidf<'a>(counts: Counts<'a>, df: &HashMap<&[String], usize>, n_images: f64) -> HashMap<&'a [String], f64> {
    counts
        .into_iter()
        .map(|(g, k)| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            (g, k as f64 * (n_images / d).ln())
        })
        .collect()
}

fn cosine(a: &HashMap<&[String], f64>, b: &HashMap<&[String], f64>) -> f64 {
    let norm = |v: &HashMap<&[String], f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    // Sum over sorted keys so the result does not depend on hash order.
    let mut terms: Vec<(&[String], f64)> = a.iter().filter_map(|(g, x)| b.get(g).map(|y| (*g, x * y))).collect();
    terms.sort_by(|p, q| p.0.cmp(q.0));
    terms.iter().map(|(_, t)| t).sum::<f64>() / (na * nb)
}

/// Consensus score in [0, 1]: TF-IDF weighted n-gram cosine similarity
/// between each candidate and each of its references, averaged over
/// references, images and orders 1..=`n_max`.
///
/// Document frequency counts the images whose reference set contains an
/// n-gram. Orders with no n-grams in a sentence contribute 0.
pub fn cider(corpus: &CaptionCorpus, n_max: usize) -> Result<f64> {
    if corpus.len() < 2 {
        return Err(MetricsError::DegenerateIdf(corpus.len()));
    }
    if n_max == 0 {
        return Err(MetricsError::Argument("n_max must be at least 1".into()));
    }
    let n_images = corpus.len() as f64;
    let mut per_order = 0.0;
    for n in 1..=n_max {
        let mut df: HashMap<&[String], usize> = HashMap::new();
        for e in corpus.entries() {
            let mut seen: Vec<&[String]> = e.references.iter().flat_map(|r| ngrams(r, n).into_keys()).collect();
            seen.sort();
            seen.dedup();
            for g in seen {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let mut order_total = 0.0;
        for e in corpus.entries() {
            let cand = tfidf(ngrams(&e.candidate, n), &df, n_images);
            let sims: f64 = e
                .references
                .iter()
                .map(|r| cosine(&cand, &tfidf(ngrams(r, n), &df, n_images)))
                .sum();
            order_total += sims / e.references.len() as f64;
        }
        per_order += order_total / n_images;
    }
    Ok(per_order / n_max as f64)
}
