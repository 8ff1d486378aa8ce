//! Automatic caption metrics and statistics over generated caption sets.
//!
//! Sentences are tokenized the same way as the training vocabulary:
//! lowercased, light punctuation stripped, split on whitespace.

mod bleu;
mod cider;
mod corpus;
mod diversity;
mod error;
mod ngram;
mod report;
mod rouge;

pub use bleu::bleu;
pub use cider::cider;
pub use corpus::{read_captions, CaptionCorpus, CorpusEntry};
pub use diversity::{difference_pct, diversity_stats, novelty_pct, DiversityStats};
pub use error::{MetricsError, Result};
pub use report::{evaluate, EvalOptions, MetricReport};
pub use rouge::{lcs_len, rouge_l, ROUGE_BETA};
