//! Image captioning with saliency and context aware attention.
//!
//! A generative LSTM attends over a grid of convolutional features. Its
//! attention scores are split into a path for salient locations and a path
//! for contextual (non-salient) locations, mixed per location by a
//! precomputed saliency grid. The crate also carries the ablation baselines,
//! training, greedy decoding with attention tracing, and the file formats
//! the command line tool works with.

pub mod attention;
pub mod data_io;
pub mod decoder;
mod error;
pub mod inference;
pub mod numerics;
pub mod optim;
pub mod vocab;

pub use error::{Error, Result};
