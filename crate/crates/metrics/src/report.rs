use serde::Serialize;

use crate::bleu::bleu;
use crate::cider::cider;
use crate::corpus::CaptionCorpus;
use crate::diversity::diversity_stats;
use crate::error::Result;
use crate::rouge::rouge_l;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    /// Multiplies the CIDEr score in the report; published tables often use 10 or 100.
    pub cider_multiplier: f64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { cider_multiplier: 1.0 }
    }
}

/// Flat metric report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub bleu_1: f64,
    pub bleu_2: f64,
    pub bleu_3: f64,
    pub bleu_4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub div1: f64,
    pub div2: f64,
    pub vocab_size: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub novelty_pct: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub difference_pct: Option<f64>,
}

/// Scores every metric that needs only the corpus itself.
pub fn evaluate(corpus: &CaptionCorpus, options: &EvalOptions) -> Result<MetricReport> {
    let b = bleu(corpus, 4);
    let captions: Vec<&[String]> = corpus.candidates().collect();
    let div = diversity_stats(&captions);
    Ok(MetricReport {
        bleu_1: b[0],
        bleu_2: b[1],
        bleu_3: b[2],
        bleu_4: b[3],
        rouge_l: rouge_l(corpus),
        cider: cider(corpus, 4)? * options.cider_multiplier,
        div1: div.div1,
        div2: div.div2,
        vocab_size: div.vocab_size,
        novelty_pct: None,
        difference_pct: None,
    })
}
