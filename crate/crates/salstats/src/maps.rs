//! Segmentation and saliency maps and their on-disk formats.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use salcap::data_io::{read_pgm, Greymap};
use serde::Deserialize;

use crate::error::{Result, SalstatsError};

const SEGM_MAGIC: &[u8; 4] = b"SEGM";

/// Per-pixel class labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentationMap {
    pub width: usize,
    pub height: usize,
    /// Row-major labels.
    pub labels: Vec<u16>,
}

impl SegmentationMap {
    pub fn new(width: usize, height: usize, labels: Vec<u16>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SalstatsError::Data("segmentation dims must be positive".into()));
        }
        if labels.len() != width * height {
            return Err(SalstatsError::Data(format!(
                "segmentation {width}x{height} needs {} labels, got {}",
                width * height,
                labels.len()
            )));
        }
        Ok(SegmentationMap { width, height, labels })
    }
}

/// Per-pixel saliency intensities.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(SalstatsError::Data("saliency dims must be positive".into()));
        }
        if pixels.len() != width * height {
            return Err(SalstatsError::Data(format!(
                "saliency {width}x{height} needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        Ok(SaliencyMap { width, height, pixels })
    }

    /// Reads an 8-bit greymap.
    pub fn load(path: &Path) -> Result<Self> {
        let g = read_pgm(path)?;
        if g.maxval != 255 {
            return Err(SalstatsError::format(
                path,
                format!("saliency maxval must be 255, got {}", g.maxval),
            ));
        }
        Self::new(g.width, g.height, g.pixels.iter().map(|&p| p as u8).collect())
    }
}

/// Label id to class name.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LabelTable {
    names: BTreeMap<u16, String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum TableFile {
    List(Vec<String>),
    Map(BTreeMap<String, String>),
}

impl LabelTable {
    pub fn new(names: BTreeMap<u16, String>) -> Self {
        LabelTable { names }
    }

    /// Names indexed by label.
    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Self {
        LabelTable {
            names: names
                .into_iter()
                .enumerate()
                .map(|(k, n)| (k as u16, n.into()))
                .collect(),
        }
    }

    /// JSON array of names (index = label) or object `{"<label>": "<name>"}`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| SalstatsError::io(path, e))?;
        let file: TableFile = serde_json::from_str(&text).map_err(|e| SalstatsError::format(path, e.to_string()))?;
        match file {
            TableFile::List(names) => {
                if names.len() > u16::MAX as usize + 1 {
                    return Err(SalstatsError::format(path, "more than 65536 labels"));
                }
                Ok(Self::from_names(names))
            }
            TableFile::Map(map) => {
                let mut names = BTreeMap::new();
                for (k, v) in map {
                    let label: u16 = k
                        .parse()
                        .map_err(|_| SalstatsError::format(path, format!("label `{k}` is not a u16")))?;
                    names.insert(label, v);
                }
                Ok(LabelTable { names })
            }
        }
    }

    pub fn name(&self, label: u16) -> Option<&str> {
        self.names.get(&label).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// A segmentation and a saliency map of the same image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePair {
    pub image_id: String,
    pub segmentation: SegmentationMap,
    pub saliency: SaliencyMap,
}

impl ImagePair {
    pub fn new(image_id: impl Into<String>, segmentation: SegmentationMap, saliency: SaliencyMap) -> Result<Self> {
        let image_id = image_id.into();
        if (segmentation.width, segmentation.height) != (saliency.width, saliency.height) {
            return Err(SalstatsError::Data(format!(
                "{image_id}: segmentation is {}x{} but saliency is {}x{}",
                segmentation.width, segmentation.height, saliency.width, saliency.height
            )));
        }
        Ok(ImagePair {
            image_id,
            segmentation,
            saliency,
        })
    }

    /// Fails on the first label missing from `table`.
    pub fn check_labels(&self, table: &LabelTable) -> Result<()> {
        match self.segmentation.labels.iter().find(|&&l| table.name(l).is_none()) {
            Some(l) => Err(SalstatsError::Data(format!(
                "{}: label {l} is not in the label table",
                self.image_id
            ))),
            None => Ok(()),
        }
    }
}

/// Raw label grid: `SEGM`, u32 LE width and height, then u16 LE labels.
pub fn read_segm(path: &Path) -> Result<SegmentationMap> {
    let bytes = std::fs::read(path).map_err(|e| SalstatsError::io(path, e))?;
    decode_segm(&bytes).map_err(|m| SalstatsError::format(path, m))
}

fn decode_segm(bytes: &[u8]) -> std::result::Result<SegmentationMap, String> {
    if bytes.len() < 12 || &bytes[..4] != SEGM_MAGIC {
        return Err("missing SEGM header".into());
    }
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    let want = w.checked_mul(h).and_then(|n| n.checked_mul(2)).ok_or("dims overflow")?;
    if body.len() != want {
        return Err(format!("{w}x{h} grid needs {want} label bytes, found {}", body.len()));
    }
    let labels = body.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]])).collect();
    SegmentationMap::new(w, h, labels).map_err(|e| e.to_string())
}

pub fn write_segm(map: &SegmentationMap, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(12 + 2 * map.labels.len());
    out.extend_from_slice(SEGM_MAGIC);
    out.extend_from_slice(&(map.width as u32).to_le_bytes());
    out.extend_from_slice(&(map.height as u32).to_le_bytes());
    for l in &map.labels {
        out.extend_from_slice(&l.to_le_bytes());
    }
    std::fs::write(path, out).map_err(|e| SalstatsError::io(path, e))
}

/// Reads a raw `SEGM` grid or a greymap of labels, chosen by magic bytes.
pub fn read_segmentation(path: &Path) -> Result<SegmentationMap> {
    let mut head = [0u8; 4];
    let n = {
        use std::io::Read;
        let mut f = std::fs::File::open(path).map_err(|e| SalstatsError::io(path, e))?;
        f.read(&mut head).map_err(|e| SalstatsError::io(path, e))?
    };
    if n == 4 && &head == SEGM_MAGIC {
        return read_segm(path);
    }
    let Greymap {
        width, height, pixels, ..
    } = read_pgm(path)?;
    SegmentationMap::new(width, height, pixels)
}

fn stems(dir: &Path, exts: &[&str]) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in std::fs::read_dir(dir).map_err(|e| SalstatsError::io(dir, e))? {
        let path = entry.map_err(|e| SalstatsError::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if !exts.contains(&ext) {
            continue;
        }
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else {
            continue;
        };
        if let Some(prev) = out.insert(stem.to_string(), path.clone()) {
            return Err(SalstatsError::Data(format!(
                "{} and {} share the image id `{stem}`",
                prev.display(),
                path.display()
            )));
        }
    }
    Ok(out)
}

/// Pairs `<id>.segm` / `<id>.pgm` segmentations with `<id>.pgm` saliency
/// maps by file stem, sorted by id. Every id must appear in both folders.
pub fn load_pairs(segmentation_dir: &Path, saliency_dir: &Path, table: &LabelTable) -> Result<Vec<ImagePair>> {
    let segs = stems(segmentation_dir, &["segm", "pgm"])?;
    let sals = stems(saliency_dir, &["pgm"])?;
    if let Some(id) = segs.keys().find(|k| !sals.contains_key(*k)) {
        return Err(SalstatsError::Data(format!(
            "no saliency map for `{id}` in {}",
            saliency_dir.display()
        )));
    }
    if let Some(id) = sals.keys().find(|k| !segs.contains_key(*k)) {
        return Err(SalstatsError::Data(format!(
            "no segmentation for `{id}` in {}",
            segmentation_dir.display()
        )));
    }
    if segs.is_empty() {
        return Err(SalstatsError::Data(format!(
            "no maps found in {}",
            segmentation_dir.display()
        )));
    }
    segs.into_iter()
        .map(|(id, seg_path)| {
            let pair = ImagePair::new(
                id.clone(),
                read_segmentation(&seg_path)?,
                SaliencyMap::load(&sals[&id])?,
            )?;
            pair.check_labels(table)?;
            Ok(pair)
        })
        .collect()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairsFile {
    labels: PathBuf,
    #[serde(default)]
    pairs: Vec<PairEntry>,
    segmentation_dir: Option<PathBuf>,
    saliency_dir: Option<PathBuf>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    image_id: String,
    segmentation: PathBuf,
    saliency: PathBuf,
}

/// Reads a pairs file: a label table path plus either an explicit
/// `pairs` list or a `segmentation_dir` / `saliency_dir` pair of folders.
/// Relative paths resolve against the file's directory.
pub fn load_pairs_file(path: &Path) -> Result<(LabelTable, Vec<ImagePair>)> {
    let text = std::fs::read_to_string(path).map_err(|e| SalstatsError::io(path, e))?;
    let file: PairsFile = serde_json::from_str(&text).map_err(|e| SalstatsError::format(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let table = LabelTable::load(&base.join(&file.labels))?;
    let pairs = match (file.pairs.is_empty(), file.segmentation_dir, file.saliency_dir) {
        (true, Some(seg), Some(sal)) => load_pairs(&base.join(seg), &base.join(sal), &table)?,
        (false, None, None) => {
            let mut seen = std::collections::HashSet::new();
            let mut out = Vec::with_capacity(file.pairs.len());
            for (k, e) in file.pairs.into_iter().enumerate() {
                if !seen.insert(e.image_id.clone()) {
                    return Err(SalstatsError::format(
                        path,
                        format!("pairs[{k}]: duplicate image_id `{}`", e.image_id),
                    ));
                }
                let pair = ImagePair::new(
                    e.image_id,
                    read_segmentation(&base.join(&e.segmentation))?,
                    SaliencyMap::load(&base.join(&e.saliency))?,
                )?;
                pair.check_labels(&table)?;
                out.push(pair);
            }
            out
        }
        _ => {
            return Err(SalstatsError::format(
                path,
                "give either a non-empty `pairs` list or both `segmentation_dir` and `saliency_dir`",
            ))
        }
    };
    Ok((table, pairs))
}
