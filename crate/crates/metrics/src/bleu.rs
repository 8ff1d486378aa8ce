use std::collections::HashMap;

use crate::corpus::CaptionCorpus;
use crate::ngram::ngrams;

/// Corpus-level BLEU-1 .. BLEU-`n_max`.
///
/// Candidate n-gram counts are clipped by their largest count in any one
/// reference and summed over the corpus. The brevity penalty uses, per
/// entry, the reference length closest to the candidate (the shorter on a
/// tie). A zero precision at some order zeroes every score from that order on.
pub fn bleu(corpus: &CaptionCorpus, n_max: usize) -> Vec<f64> {
    let mut clipped = vec![0usize; n_max];
    let mut total = vec![0usize; n_max];
    let (mut c, mut r) = (0usize, 0usize);
    for e in corpus.entries() {
        let cand = &e.candidate;
        c += cand.len();
        r += e
            .references
            .iter()
            .map(|x| x.len())
            .min_by_key(|&len| (len.abs_diff(cand.len()), len))
            .unwrap_or(0);
        for n in 1..=n_max {
            let mut best: HashMap<&[String], usize> = HashMap::new();
            for reference in &e.references {
                for (g, k) in ngrams(reference, n) {
                    let slot = best.entry(g).or_insert(0);
                    *slot = (*slot).max(k);
                }
            }
            clipped[n - 1] += ngrams(cand, n)
                .into_iter()
                .map(|(g, k)| k.min(best.get(g).copied().unwrap_or(0)))
                .sum::<usize>();
            total[n - 1] += (cand.len() + 1).saturating_sub(n);
        }
    }
    if c == 0 {
        return vec![0.0; n_max];
    }
    let bp = if c > r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    let mut log_sum = 0.0;
    let mut out = Vec::with_capacity(n_max);
    let mut alive = true;
    for n in 0..n_max {
        alive &= clipped[n] > 0;
        if alive {
            log_sum += (clipped[n] as f64 / total[n] as f64).ln();
            out.push(bp * (log_sum / (n + 1) as f64).exp());
        } else {
            out.push(0.0);
        }
    }
    out
}
