//! Greedy caption generation and per-step attention traces.

use std::path::Path;

use crate::data_io::{write_tensor, DType};
use crate::decoder::{ImageInput, Model, StepOutput};
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor};
use crate::vocab::{Vocabulary, BOS, EOS, PAD};

/// A greedily decoded caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Word ids without BOS or EOS.
    pub ids: Vec<usize>,
    /// True when `max_len` steps ran without emitting EOS.
    pub truncated: bool,
}

impl Decoded {
    pub fn text(&self, vocab: &Vocabulary) -> Result<String> {
        vocab.decode(&self.ids)
    }
}

/// One decoder step of a two-path model.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    /// Emitted token id (EOS on the final step of a finished caption).
    pub token: usize,
    /// Spatial means over all locations.
    pub mean_e_sal: f64,
    pub mean_e_ctx: f64,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AttentionTrace {
    pub records: Vec<TraceRecord>,
}

impl AttentionTrace {
    /// `t,word,mean_e_sal,mean_e_ctx` with one row per step.
    pub fn to_csv(&self, vocab: &Vocabulary) -> Result<String> {
        let mut out = String::from("t,word,mean_e_sal,mean_e_ctx\n");
        for r in &self.records {
            let word = vocab
                .word(r.token)
                .ok_or_else(|| Error::Vocab(format!("unknown token id {}", r.token)))?;
            out.push_str(&format!("{},{},{},{}\n", r.t, word, r.mean_e_sal, r.mean_e_ctx));
        }
        Ok(out)
    }

    /// Stacked `steps x L` attention weights.
    pub fn alpha_tensor(&self) -> Result<Tensor> {
        let l = self.records.first().map_or(0, |r| r.alpha.len());
        if l == 0 {
            return Err(Error::arg("empty trace"));
        }
        let data = self.records.iter().flat_map(|r| r.alpha.iter().copied()).collect();
        Tensor::new(vec![self.records.len(), l], data)
    }

    pub fn write_alpha(&self, path: &Path) -> Result<()> {
        write_tensor(&self.alpha_tensor()?, path, DType::F64)
    }
}

/// Highest-scoring token other than PAD and BOS; ties go to the lowest id.
fn argmax(logits: &[f64]) -> usize {
    let mut best = EOS;
    for (k, &x) in logits.iter().enumerate().skip(EOS + 1) {
        if x > logits[best] {
            best = k;
        }
    }
    best
}

fn run(
    model: &Model,
    image: &ImageInput,
    max_len: usize,
    mut observe: impl FnMut(&Tape, &StepOutput, usize) -> Result<()>,
) -> Result<Decoded> {
    if max_len == 0 {
        return Err(Error::arg("max_len must be at least 1"));
    }
    let mut tape = Tape::new();
    let mut session = model.session(&mut tape, image)?;
    let mut ids = Vec::new();
    let mut word = BOS;
    for _ in 0..max_len {
        let out = session.step(&mut tape, word)?;
        word = argmax(tape.value(out.logits).data());
        debug_assert!(word != PAD && word != BOS);
        observe(&tape, &out, word)?;
        if word == EOS {
            return Ok(Decoded { ids, truncated: false });
        }
        ids.push(word);
    }
    Ok(Decoded { ids, truncated: true })
}

/// Feeds back the most probable word from BOS until EOS or `max_len` steps.
pub fn greedy_decode(model: &Model, image: &ImageInput, max_len: usize) -> Result<Decoded> {
    run(model, image, max_len, |_, _, _| Ok(()))
}

/// Greedy decoding that also records the salient and contextual score
/// means and the attention weights at every step. Two-path variants only.
pub fn trace_attention(model: &Model, image: &ImageInput, max_len: usize) -> Result<(Decoded, AttentionTrace)> {
    let variant = model.config().variant;
    if !variant.is_two_path() {
        return Err(Error::UnsupportedVariant(variant.to_string()));
    }
    let mut trace = AttentionTrace::default();
    let decoded = run(model, image, max_len, |tape, out, token| {
        let att = &out.attention;
        let (Some(e_sal), Some(e_ctx), Some(alpha)) = (att.e_sal, att.e_ctx, att.alpha) else {
            return Err(Error::UnsupportedVariant(variant.to_string()));
        };
        trace.records.push(TraceRecord {
            t: trace.records.len() + 1,
            token,
            mean_e_sal: tape.value(e_sal).mean(),
            mean_e_ctx: tape.value(e_ctx).mean(),
            alpha: tape.value(alpha).data().to_vec(),
        });
        Ok(())
    })?;
    Ok((decoded, trace))
}
