//! File formats and dataset loading.

pub mod manifest;
pub mod pgm;
pub mod saliency;
pub mod synth;
pub mod tensor_file;

pub use manifest::{Dataset, DatasetManifest, GridSpec, ManifestEntry, Sample, Split};
pub use pgm::{read_pgm, write_pgm, Greymap};
pub use saliency::{area_downsample, prepare_saliency, SaliencySource};
pub use synth::{gen_synthetic, SyntheticSpec};
pub use tensor_file::{load_params, read_tensor, save_params, write_tensor, DType};
