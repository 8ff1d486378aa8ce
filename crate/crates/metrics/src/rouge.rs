use crate::corpus::CaptionCorpus;

/// Recall weight of the ROUGE_L F-measure.
pub const ROUGE_BETA: f64 = 1.2;

/// Length of the longest common subsequence.
pub fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Mean per-entry ROUGE_L. Each entry combines the best LCS precision and
/// the best LCS recall over its references.
pub fn rouge_l(corpus: &CaptionCorpus) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let total: f64 = corpus
        .entries()
        .iter()
        .map(|e| {
            let (mut p, mut r) = (0.0f64, 0.0f64);
            for reference in &e.references {
                let l = lcs_len(&e.candidate, reference) as f64;
                if l > 0.0 {
                    p = p.max(l / e.candidate.len() as f64);
                    r = r.max(l / reference.len() as f64);
                }
            }
            if p == 0.0 || r == 0.0 {
                0.0
            } else {
                (1.0 + b2) * p * r / (r + b2 * p)
            }
        })
        .sum();
    total / corpus.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn lcs_cases() {
        assert_eq!(lcs_len(&words("a b c"), &words("a c")), 2);
        assert_eq!(lcs_len(&words("a b c d"), &words("b d a c")), 2);
        assert_eq!(lcs_len(&words(""), &words("a")), 0);
    }

    #[test]
    fn f_measure() {
        let c = CaptionCorpus::from_sentences([("x".to_string(), "a b c", vec!["a c"])]).unwrap();
        let (p, r) = (2.0 / 3.0, 1.0);
        let want = 2.44 * p * r / (r + 1.44 * p);
        assert!((rouge_l(&c) - want).abs() < 1e-15);
        let same = CaptionCorpus::from_sentences([("x".to_string(), "a b", vec!["a b"])]).unwrap();
        assert_eq!(rouge_l(&same), 1.0);
        let disjoint = CaptionCorpus::from_sentences([("x".to_string(), "a b", vec!["c d"])]).unwrap();
        assert_eq!(rouge_l(&disjoint), 0.0);
    }
}
