//! Hit rates per class and the size/saliency joint distribution.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Result, SalstatsError};
use crate::maps::{ImagePair, LabelTable, SaliencyMap};

/// Threshold for finding the least salient classes.
pub const DEFAULT_LOW_THRESHOLD: u8 = 10;
/// Threshold for finding the most salient classes.
pub const DEFAULT_HIGH_THRESHOLD: u8 = 245;

/// Pixel is set iff its intensity is strictly above `threshold`.
pub fn binarize(map: &SaliencyMap, threshold: u8) -> Vec<bool> {
    map.pixels.iter().map(|&p| p > threshold).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HitOptions {
    pub threshold: u8,
    /// Classes seen in fewer images are dropped from the rates.
    pub min_occurrences: usize,
    /// Share of a class's pixels that must be salient for a hit. At 0 a
    /// single overlapping pixel suffices.
    pub min_overlap_frac: f64,
}

impl Default for HitOptions {
    fn default() -> Self {
        HitOptions {
            threshold: DEFAULT_HIGH_THRESHOLD,
            min_occurrences: 500,
            min_overlap_frac: 0.0,
        }
    }
}

impl HitOptions {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_overlap_frac) {
            return Err(SalstatsError::Argument(format!(
                "min_overlap_frac must be in [0, 1], got {}",
                self.min_overlap_frac
            )));
        }
        Ok(())
    }
}

/// Per-label `(occurrences, hits)` summed over images.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HitCounts {
    pub counts: BTreeMap<u16, (usize, usize)>,
}

impl HitCounts {
    pub fn merge(&mut self, other: &HitCounts) {
        for (&label, &(occ, hits)) in &other.counts {
            let slot = self.counts.entry(label).or_insert((0, 0));
            slot.0 += occ;
            slot.1 += hits;
        }
    }
}

/// `(class pixels, salient class pixels)` per label of one image.
fn overlap(pair: &ImagePair, mask: &[bool]) -> BTreeMap<u16, (usize, usize)> {
    let mut out = BTreeMap::new();
    for (&label, &on) in pair.segmentation.labels.iter().zip(mask) {
        let slot = out.entry(label).or_insert((0, 0));
        slot.0 += 1;
        slot.1 += on as usize;
    }
    out
}

fn count_one(pair: &ImagePair, threshold: u8, min_overlap_frac: f64) -> HitCounts {
    let mask = binarize(&pair.saliency, threshold);
    let counts = overlap(pair, &mask)
        .into_iter()
        .map(|(label, (size, salient))| {
            let hit = salient > 0 && salient as f64 >= min_overlap_frac * size as f64;
            (label, (1, hit as usize))
        })
        .collect();
    HitCounts { counts }
}

/// Occurrence and hit counts per label. Images are split across threads and
/// the partial counts merged in input order.
pub fn count_hits(pairs: &[ImagePair], threshold: u8, min_overlap_frac: f64) -> HitCounts {
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get());
    let chunk = pairs.len().div_ceil(workers).max(16);
    let parts: Vec<HitCounts> = std::thread::scope(|s| {
        let handles: Vec<_> = pairs
            .chunks(chunk)
            .map(|c| {
                s.spawn(move || {
                    let mut acc = HitCounts::default();
                    for p in c {
                        acc.merge(&count_one(p, threshold, min_overlap_frac));
                    }
                    acc
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    let mut total = HitCounts::default();
    for p in &parts {
        total.merge(p);
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassHitRate {
    pub class: String,
    pub label: u16,
    pub occurrences: usize,
    pub hits: usize,
    /// Percentage of occurrences that were hit.
    pub rate: f64,
}

/// Hit rate of every class seen in at least `min_occurrences` images,
/// ordered by label.
pub fn class_hit_rates(pairs: &[ImagePair], table: &LabelTable, options: &HitOptions) -> Result<Vec<ClassHitRate>> {
    options.validate()?;
    for p in pairs {
        p.check_labels(table)?;
    }
    let counts = count_hits(pairs, options.threshold, options.min_overlap_frac);
    Ok(counts
        .counts
        .into_iter()
        .filter(|&(_, (occ, _))| occ >= options.min_occurrences.max(1))
        .map(|(label, (occurrences, hits))| ClassHitRate {
            class: table.name(label).expect("labels checked").to_string(),
            label,
            occurrences,
            hits,
            rate: 100.0 * hits as f64 / occurrences as f64,
        })
        .collect())
}

/// One class instance in one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeSaliency {
    pub class: String,
    pub image: String,
    /// Class pixels over image pixels.
    pub size: f64,
    /// Mean class-pixel intensity over 255.
    pub saliency: f64,
}

/// Size and mean saliency of every class present in every image, in input
/// order and then by label.
pub fn size_saliency_distribution(pairs: &[ImagePair], table: &LabelTable) -> Result<Vec<SizeSaliency>> {
    let mut out = Vec::new();
    for pair in pairs {
        pair.check_labels(table)?;
        let mut sums: BTreeMap<u16, (usize, u64)> = BTreeMap::new();
        for (&label, &p) in pair.segmentation.labels.iter().zip(&pair.saliency.pixels) {
            let slot = sums.entry(label).or_insert((0, 0));
            slot.0 += 1;
            slot.1 += p as u64;
        }
        let area = pair.segmentation.labels.len() as f64;
        for (label, (n, sum)) in sums {
            out.push(SizeSaliency {
                class: table.name(label).expect("labels checked").to_string(),
                image: pair.image_id.clone(),
                size: n as f64 / area,
                saliency: sum as f64 / (n as f64 * 255.0),
            });
        }
    }
    Ok(out)
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| SalstatsError::io(path, e))
}

/// `class,occurrences,hits,rate`.
pub fn write_hit_csv(rates: &[ClassHitRate], path: &Path) -> Result<()> {
    let mut f = create(path)?;
    let io = |e| SalstatsError::io(path, e);
    writeln!(f, "class,occurrences,hits,rate").map_err(io)?;
    for r in rates {
        writeln!(f, "{},{},{},{}", field(&r.class), r.occurrences, r.hits, r.rate).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// `class,image,size,saliency`.
pub fn write_distribution_csv(rows: &[SizeSaliency], path: &Path) -> Result<()> {
    let mut f = create(path)?;
    let io = |e| SalstatsError::io(path, e);
    writeln!(f, "class,image,size,saliency").map_err(io)?;
    for r in rows {
        writeln!(f, "{},{},{},{}", field(&r.class), field(&r.image), r.size, r.saliency).map_err(io)?;
    }
    f.flush().map_err(io)
}

/// `class,image,saliency` with one row per labelled pixel.
pub fn write_pixel_csv(pairs: &[ImagePair], table: &LabelTable, path: &Path) -> Result<()> {
    for p in pairs {
        p.check_labels(table)?;
    }
    let mut f = create(path)?;
    let io = |e| SalstatsError::io(path, e);
    writeln!(f, "class,image,saliency").map_err(io)?;
    for pair in pairs {
        let image = field(&pair.image_id);
        for (&label, &p) in pair.segmentation.labels.iter().zip(&pair.saliency.pixels) {
            let class = field(table.name(label).expect("labels checked"));
            writeln!(f, "{class},{image},{}", p as f64 / 255.0).map_err(io)?;
        }
    }
    f.flush().map_err(io)
}
