#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use salcap::attention::{SaliencyGrid, Variant};
use salcap::decoder::{ImageInput, Model, ModelConfig};
use salcap::numerics::{ParamStore, Tensor};

pub fn config(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        raw_feature_dim: 5,
        feature_dim: 6,
        hidden: 7,
        embed: 4,
        att_dim: 5,
        vocab_size: 9,
    }
}

/// A model whose every parameter is uniform in [-0.5, 0.5].
pub fn random_model(variant: Variant, seed: u64) -> Model {
    let mut model = Model::init(config(variant), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(99));
    for slot in model.params_mut().slots_mut() {
        slot.value
            .data_mut()
            .iter_mut()
            .for_each(|x| *x = rng.random_range(-0.5..0.5));
    }
    model
}

pub fn random_image(l: usize, d_raw: usize, rng: &mut ChaCha8Rng) -> ImageInput {
    let f = Tensor::new(
        vec![l, d_raw],
        (0..l * d_raw).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let s = SaliencyGrid::new((0..l).map(|_| rng.random_range(0.0..=1.0)).collect()).unwrap();
    ImageInput::new(f, s).unwrap()
}

pub fn with_saliency(image: &ImageInput, s: Vec<f64>) -> ImageInput {
    ImageInput::new(image.features.clone(), SaliencyGrid::new(s).unwrap()).unwrap()
}

/// Copies `src` into a store for `variant`, mapping names through `rename`.
pub fn remap(src: &ParamStore, variant: Variant, rename: impl Fn(&str) -> Option<String>) -> Model {
    let mut store = ParamStore::new();
    for slot in src.slots() {
        if let Some(name) = rename(slot.name()) {
            store.insert(name, slot.value.clone()).unwrap();
        }
    }
    Model::from_store(config(variant), store).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
