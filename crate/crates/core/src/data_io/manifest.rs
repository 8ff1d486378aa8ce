use std::collections::HashSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::saliency::{prepare_saliency, SaliencySource};
use super::tensor_file::read_tensor;
use crate::decoder::ImageInput;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::arg(format!("unknown split `{s}` (train|val|test)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn locations(&self) -> usize {
        self.rows * self.cols
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// `TNSR` file of `L x D_raw` features, relative to the manifest.
    pub features: String,
    /// `.pgm` or `TNSR` saliency map, relative to the manifest.
    pub saliency: String,
    pub captions: Vec<String>,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub grid: GridSpec,
    pub feature_dim: usize,
    pub entries: Vec<ManifestEntry>,
}

/// One image ready for the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub split: Split,
    pub captions: Vec<String>,
    pub input: ImageInput,
}

/// A manifest with every referenced file loaded and validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub samples: Vec<Sample>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    fn check(&self, origin: &Path) -> Result<()> {
        let fail = |msg: String| Err(Error::Data(format!("{}: {msg}", origin.display())));
        if self.grid.rows == 0 || self.grid.cols == 0 {
            return fail("grid rows and cols must be positive".into());
        }
        if self.feature_dim == 0 {
            return fail("feature_dim must be positive".into());
        }
        let mut seen = HashSet::new();
        for (k, e) in self.entries.iter().enumerate() {
            if e.id.is_empty() {
                return fail(format!("entries[{k}]: empty id"));
            }
            if !seen.insert(e.id.as_str()) {
                return fail(format!("entries[{k}]: duplicate id `{}`", e.id));
            }
        }
        Ok(())
    }
}

impl Dataset {
    /// Loads the manifest at `path` and every file it references. Paths in
    /// the manifest are relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        manifest.check(path)?;
        let base = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let samples = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(k, e)| load_entry(&manifest, &base, e).map_err(|err| qualify(path, k, &e.id, err)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset { manifest, samples })
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Sample> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

fn qualify(path: &Path, k: usize, id: &str, err: Error) -> Error {
    Error::Data(format!("{}: entries[{k}] (id `{id}`): {err}", path.display()))
}

fn load_entry(m: &DatasetManifest, base: &Path, e: &ManifestEntry) -> Result<Sample> {
    let features = read_tensor(&base.join(&e.features))?;
    let want = [m.grid.locations(), m.feature_dim];
    if features.dims() != want {
        return Err(Error::Data(format!(
            "features have dims {:?}, expected {want:?} ({}x{} grid)",
            features.dims(),
            m.grid.rows,
            m.grid.cols
        )));
    }
    let source = SaliencySource::load(&base.join(&e.saliency))?;
    let saliency = prepare_saliency(&source, m.grid.rows, m.grid.cols)?;
    Ok(Sample {
        id: e.id.clone(),
        split: e.split,
        captions: e.captions.clone(),
        input: ImageInput::new(features, saliency)?,
    })
}
