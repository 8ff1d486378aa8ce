//! Synthetic captioning datasets small enough to train on a laptop.
//!
//! Each image shows one salient object and one piece of context. The
//! feature grid is Gaussian noise with two square blocks of cells shifted by
//! a per-word signature vector: the salient block by the object's signature
//! and the context block by the context word's signature. The saliency map
//! is bright over the salient block and dark elsewhere, so the object can
//! only be told apart from the context through saliency.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{DatasetManifest, GridSpec, ManifestEntry, Split};
use super::pgm::{write_pgm, Greymap};
use super::tensor_file::{write_tensor, DType};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Caption templates; `{s}` is the salient word and `{c}` the context word.
/// An image uses the template indexed by its salient word modulo the count.
pub const TEMPLATES: [&str; 3] = ["a {s} in a {c}", "a {s} near the {c}", "the {s} on a {c}"];

/// Saliency intensity range over the salient block.
pub const SALIENT_RANGE: (u8, u8) = (200, 255);
/// Saliency intensity range everywhere else.
pub const BACKGROUND_RANGE: (u8, u8) = (0, 30);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_images: usize,
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Channels of the generated raw features.
    pub feature_dim: usize,
    pub salient_words: Vec<String>,
    pub context_words: Vec<String>,
    pub seed: u64,
    #[serde(default)]
    pub val_images: usize,
    #[serde(default)]
    pub test_images: usize,
    /// Side of the square salient and context blocks, in grid cells.
    #[serde(default = "default_block")]
    pub block_size: usize,
    /// Saliency map pixels per grid cell along each axis.
    #[serde(default = "default_ppc")]
    pub pixels_per_cell: usize,
    /// Standard deviation of each signature entry.
    #[serde(default = "default_signature")]
    pub signature_scale: f64,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
}

fn default_block() -> usize {
    2
}
fn default_ppc() -> usize {
    8
}
fn default_signature() -> f64 {
    1.0
}
fn default_noise() -> f64 {
    1.0
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let words = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        SyntheticSpec {
            n_images: 32,
            grid_rows: 5,
            grid_cols: 5,
            feature_dim: 32,
            salient_words: words(&["dog", "cat", "man", "woman", "bird", "horse", "boat", "car"]),
            context_words: words(&["field", "street", "room", "beach", "park", "kitchen", "garden", "river"]),
            seed: 42,
            val_images: 0,
            test_images: 0,
            block_size: default_block(),
            pixels_per_cell: default_ppc(),
            signature_scale: default_signature(),
            noise_std: default_noise(),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.salient_words.is_empty() || self.context_words.is_empty() {
            return bad("template word lists must be non-empty");
        }
        if [
            self.n_images,
            self.grid_rows,
            self.grid_cols,
            self.feature_dim,
            self.block_size,
            self.pixels_per_cell,
        ]
        .contains(&0)
        {
            return bad("sizes must be positive");
        }
        if self.val_images + self.test_images > self.n_images {
            return bad("val_images + test_images exceeds n_images");
        }
        let b = self.block_size;
        // Two disjoint blocks must always fit.
        if !(self.grid_rows >= 2 * b && self.grid_cols >= b || self.grid_cols >= 2 * b && self.grid_rows >= b) {
            return bad("grid too small for two disjoint blocks");
        }
        if !(self.signature_scale.is_finite() && self.noise_std.is_finite())
            || self.signature_scale < 0.0
            || self.noise_std < 0.0
        {
            return bad("scales must be finite and non-negative");
        }
        Ok(())
    }

    /// Caption for a salient/context word index pair.
    pub fn caption(&self, salient: usize, context: usize) -> String {
        TEMPLATES[salient % TEMPLATES.len()]
            .replace("{s}", &self.salient_words[salient])
            .replace("{c}", &self.context_words[context])
    }
}

fn overlaps(a: (usize, usize), b: (usize, usize), size: usize) -> bool {
    a.0 < b.0 + size && b.0 < a.0 + size && a.1 < b.1 + size && b.1 < a.1 + size
}

/// Writes features, saliency maps and `manifest.json` under `out_dir`.
pub fn gen_synthetic(spec: &SyntheticSpec, out_dir: &Path) -> Result<DatasetManifest> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let d = spec.feature_dim;
    let sig = Normal::new(0.0, spec.signature_scale).expect("valid scale");
    let noise = Normal::new(0.0, spec.noise_std).expect("valid scale");
    let mut signatures =
        |n: usize| -> Vec<Vec<f64>> { (0..n).map(|_| (0..d).map(|_| sig.sample(&mut rng)).collect()).collect() };
    let salient_sigs = signatures(spec.salient_words.len());
    let context_sigs = signatures(spec.context_words.len());

    for sub in ["features", "saliency"] {
        let p = out_dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }

    let (rows, cols, b) = (spec.grid_rows, spec.grid_cols, spec.block_size);
    let n_train = spec.n_images - spec.val_images - spec.test_images;
    let mut entries = Vec::with_capacity(spec.n_images);
    for k in 0..spec.n_images {
        let id = format!("img_{k:04}");
        let sal_word = rng.random_range(0..spec.salient_words.len());
        let ctx_word = rng.random_range(0..spec.context_words.len());
        let sal_at = (rng.random_range(0..=rows - b), rng.random_range(0..=cols - b));
        let ctx_at = loop {
            let at = (rng.random_range(0..=rows - b), rng.random_range(0..=cols - b));
            if !overlaps(at, sal_at, b) {
                break at;
            }
        };
        let in_block = |r: usize, c: usize, at: (usize, usize)| r >= at.0 && r < at.0 + b && c >= at.1 && c < at.1 + b;

        let mut feats = Vec::with_capacity(rows * cols * d);
        for r in 0..rows {
            for c in 0..cols {
                let offset = if in_block(r, c, sal_at) {
                    Some(&salient_sigs[sal_word])
                } else if in_block(r, c, ctx_at) {
                    Some(&context_sigs[ctx_word])
                } else {
                    None
                };
                for j in 0..d {
                    feats.push(noise.sample(&mut rng) + offset.map_or(0.0, |s| s[j]));
                }
            }
        }
        let features = Tensor::new(vec![rows * cols, d], feats)?;

        let ppc = spec.pixels_per_cell;
        let (h, w) = (rows * ppc, cols * ppc);
        let mut pixels = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let (lo, hi) = if in_block(y / ppc, x / ppc, sal_at) {
                    SALIENT_RANGE
                } else {
                    BACKGROUND_RANGE
                };
                pixels.push(rng.random_range(lo..=hi));
            }
        }
        let saliency = Greymap::from_u8(w, h, &pixels)?;

        let feat_rel = format!("features/{id}.tnsr");
        let sal_rel = format!("saliency/{id}.pgm");
        write_tensor(&features, &out_dir.join(&feat_rel), DType::F64)?;
        write_pgm(&saliency, &out_dir.join(&sal_rel))?;
        let split = if k < n_train {
            Split::Train
        } else if k < n_train + spec.val_images {
            Split::Val
        } else {
            Split::Test
        };
        entries.push(ManifestEntry {
            id,
            features: feat_rel,
            saliency: sal_rel,
            captions: vec![spec.caption(sal_word, ctx_word)],
            split,
        });
    }

    let manifest = DatasetManifest {
        grid: GridSpec { rows, cols },
        feature_dim: d,
        entries,
    };
    let path = out_dir.join("manifest.json");
    std::fs::write(&path, manifest.to_json()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
