use std::collections::HashMap;

pub(crate) type Counts<'a> = HashMap<&'a [String], usize>;

pub(crate) fn ngrams(words: &[String], n: usize) -> Counts<'_> {
    let mut out = HashMap::new();
    if n == 0 || words.len() < n {
        return out;
    }
    for g in words.windows(n) {
        *out.entry(g).or_insert(0) += 1;
    }
    out
}
