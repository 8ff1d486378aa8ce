use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::optimizer::{optimizer_step, OptimizerState, TrainConfig};
use crate::data_io::Sample;
use crate::decoder::{ImageInput, Model};
use crate::error::{Error, Result};
use crate::numerics::Tape;
use crate::vocab::{tokenize, Vocabulary, PAD};

/// Encoded training pairs: one entry per caption, each pointing at its image.
#[derive(Debug, Clone)]
pub struct TrainSet {
    inputs: Vec<ImageInput>,
    /// `(image index, BOS w_1 .. w_n EOS)`.
    examples: Vec<(usize, Vec<usize>)>,
    truncated: usize,
}

impl TrainSet {
    /// Encodes every caption of `samples`. Captions longer than
    /// `max_caption_len` words are cut and closed with EOS.
    pub fn new<'a>(
        samples: impl IntoIterator<Item = &'a Sample>,
        vocab: &Vocabulary,
        max_caption_len: usize,
    ) -> Result<Self> {
        if max_caption_len == 0 {
            return Err(Error::arg("max_caption_len must be at least 1"));
        }
        let mut set = TrainSet {
            inputs: vec![],
            examples: vec![],
            truncated: 0,
        };
        for sample in samples {
            let image = set.inputs.len();
            set.inputs.push(sample.input.clone());
            for caption in &sample.captions {
                let mut tokens = tokenize(caption);
                if tokens.len() > max_caption_len {
                    tokens.truncate(max_caption_len);
                    set.truncated += 1;
                }
                set.examples.push((image, vocab.encode_tokens(&tokens)));
            }
        }
        if set.examples.is_empty() {
            return Err(Error::Data("training set has no captions".into()));
        }
        Ok(set)
    }

    /// Builds a set from already encoded sequences.
    pub fn from_encoded(inputs: Vec<ImageInput>, examples: Vec<(usize, Vec<usize>)>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Data("training set has no captions".into()));
        }
        if let Some((i, _)) = examples.iter().find(|(i, ids)| *i >= inputs.len() || ids.len() < 2) {
            return Err(Error::arg(format!("bad example for image {i}")));
        }
        Ok(TrainSet {
            inputs,
            examples,
            truncated: 0,
        })
    }

    pub fn inputs(&self) -> &[ImageInput] {
        &self.inputs
    }

    pub fn examples(&self) -> &[(usize, Vec<usize>)] {
        &self.examples
    }

    /// Captions cut to `max_caption_len`.
    pub fn truncated(&self) -> usize {
        self.truncated
    }

    /// Scored tokens (every id after BOS).
    pub fn token_count(&self) -> usize {
        self.examples.iter().map(|(_, ids)| ids.len() - 1).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-token NLL over the epoch, measured before each batch update.
    pub mean_loss: f64,
    pub tokens: usize,
    pub tokens_per_sec: f64,
    pub batches: usize,
    pub truncated: usize,
}

/// Batches for one epoch: shuffled, bucketed by length, right-padded, and
/// visited in shuffled order.
fn make_batches(set: &TrainSet, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<(usize, Vec<usize>)>> {
    let mut order: Vec<usize> = (0..set.examples.len()).collect();
    order.shuffle(rng);
    order.sort_by_key(|&k| set.examples[k].1.len());
    let mut batches: Vec<Vec<(usize, Vec<usize>)>> = order
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk.iter().map(|&k| set.examples[k].1.len()).max().unwrap_or(0);
            chunk
                .iter()
                .map(|&k| {
                    let (image, ids) = &set.examples[k];
                    let mut row = ids.clone();
                    row.resize(width, PAD);
                    (*image, row)
                })
                .collect()
        })
        .collect();
    batches.shuffle(rng);
    batches
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    rng
}

/// Summed NLL of one padded batch with gradients of the batch mean
/// accumulated into the store. Rows are processed in order.
pub fn batch_loss(model: &mut Model, inputs: &[ImageInput], batch: &[(usize, Vec<usize>)]) -> Result<(f64, usize)> {
    let n_tokens: usize = batch
        .iter()
        .map(|(_, ids)| ids.iter().skip(1).take_while(|&&t| t != PAD).count())
        .sum();
    if n_tokens == 0 {
        return Err(Error::arg("batch has no non-pad tokens"));
    }
    let mut total = 0.0;
    for (image, ids) in batch {
        let mut tape = Tape::new();
        let (nll, _) = model.sequence_nll(&mut tape, &inputs[*image], ids)?;
        total += tape.value(nll).item()?;
        let scaled = tape.scale(nll, 1.0 / n_tokens as f64)?;
        tape.backward(scaled, model.params_mut())?;
    }
    Ok((total, n_tokens))
}

/// One pass over `set` with teacher forcing.
pub fn train_epoch(
    model: &mut Model,
    set: &TrainSet,
    state: &mut OptimizerState,
    config: &TrainConfig,
    epoch: usize,
) -> Result<EpochStats> {
    config.validate()?;
    let start = Instant::now();
    let mut rng = epoch_rng(config.seed, epoch);
    let batches = make_batches(set, config.batch_size, &mut rng);
    let mut loss = 0.0;
    let mut tokens = 0;
    model.params_mut().zero_grads();
    for batch in &batches {
        let (l, n) = batch_loss(model, &set.inputs, batch)?;
        loss += l;
        tokens += n;
        optimizer_step(model.params_mut(), state, config)?;
    }
    let secs = start.elapsed().as_secs_f64();
    Ok(EpochStats {
        epoch,
        mean_loss: loss / tokens as f64,
        tokens,
        tokens_per_sec: if secs > 0.0 {
            tokens as f64 / secs
        } else {
            f64::INFINITY
        },
        batches: batches.len(),
        truncated: set.truncated,
    })
}

/// Runs `config.epochs` epochs, calling `on_epoch` after each one.
pub fn fit(
    model: &mut Model,
    set: &TrainSet,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats, &Model) -> Result<()>,
) -> Result<Vec<EpochStats>> {
    config.validate()?;
    let mut state = OptimizerState::new(model.params());
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let stats = train_epoch(model, set, &mut state, config, epoch)?;
        log::info!(
            "epoch {epoch}: loss {:.5}, {:.0} tokens/s",
            stats.mean_loss,
            stats.tokens_per_sec
        );
        on_epoch(&stats, model)?;
        history.push(stats);
    }
    Ok(history)
}

/// `epoch,mean_loss,tokens_per_sec` log.
pub fn write_log_csv(stats: &[EpochStats], path: &Path) -> Result<()> {
    let mut out = String::from("epoch,mean_loss,tokens_per_sec\n");
    for s in stats {
        out.push_str(&format!("{},{},{:.1}\n", s.epoch, s.mean_loss, s.tokens_per_sec));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::{SaliencyGrid, Variant};
    use crate::decoder::ModelConfig;
    use crate::numerics::Tensor;

    fn setup(variant: Variant) -> (Model, TrainSet) {
        let config = ModelConfig {
            variant,
            raw_feature_dim: 4,
            feature_dim: 4,
            hidden: 6,
            embed: 3,
            att_dim: 3,
            vocab_size: 7,
        };
        let model = Model::init(config, 3).unwrap();
        let inputs: Vec<ImageInput> = (0..3)
            .map(|k| {
                let f = Tensor::new(vec![4, 4], (0..16).map(|i| ((i * 7 + k) % 5) as f64 / 5.0).collect()).unwrap();
                ImageInput::new(f, SaliencyGrid::new(vec![0.1, 0.9, 0.5, 0.0]).unwrap()).unwrap()
            })
            .collect();
        let examples = vec![
            (0, vec![1, 4, 5, 2]),
            (1, vec![1, 6, 2]),
            (2, vec![1, 4, 4, 6, 2]),
            (0, vec![1, 5, 2]),
        ];
        (model, TrainSet::from_encoded(inputs, examples).unwrap())
    }

    #[test]
    fn zero_lr_freezes_params() {
        let (mut model, set) = setup(Variant::SaliencyContext);
        let before = model.params().clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let mut st = OptimizerState::new(model.params());
        let stats = train_epoch(&mut model, &set, &mut st, &cfg, 1).unwrap();
        assert!(stats.mean_loss > 0.0);
        assert_eq!(stats.tokens, 3 + 2 + 4 + 2);
        for (a, b) in before.slots().iter().zip(model.params().slots()) {
            assert_eq!(a.value, b.value);
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let run = || {
            let (mut model, set) = setup(Variant::Soft);
            let h = fit(&mut model, &set, &cfg, |_, _| Ok(())).unwrap();
            (h.iter().map(|s| s.mean_loss).collect::<Vec<_>>(), model.into_params())
        };
        let (a, pa) = run();
        let (b, pb) = run();
        assert_eq!(a, b);
        for (x, y) in pa.slots().iter().zip(pb.slots()) {
            assert_eq!(x.value, y.value);
        }
    }

    #[test]
    fn batches_are_bucketed_and_padded() {
        let (_, set) = setup(Variant::Soft);
        let mut rng = epoch_rng(1, 1);
        let batches = make_batches(&set, 2, &mut rng);
        assert_eq!(batches.len(), 2);
        for b in &batches {
            let w = b[0].1.len();
            assert!(b.iter().all(|(_, r)| r.len() == w));
        }
        let mut lens: Vec<usize> = batches
            .iter()
            .flatten()
            .map(|(_, r)| r.iter().filter(|&&t| t != PAD).count())
            .collect();
        lens.sort();
        assert_eq!(lens, vec![3, 3, 4, 5]);
    }
}
