//! Which semantic classes a saliency predictor hits, and how object size
//! relates to the saliency it receives.

mod error;
mod maps;
mod stats;

pub use error::{Result, SalstatsError};
pub use maps::{
    load_pairs, load_pairs_file, read_segm, read_segmentation, write_segm, ImagePair, LabelTable, SaliencyMap,
    SegmentationMap,
};
pub use stats::{
    binarize, class_hit_rates, count_hits, size_saliency_distribution, write_distribution_csv, write_hit_csv,
    write_pixel_csv, ClassHitRate, HitCounts, HitOptions, SizeSaliency, DEFAULT_HIGH_THRESHOLD, DEFAULT_LOW_THRESHOLD,
};
