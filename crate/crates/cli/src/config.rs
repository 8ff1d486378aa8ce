//! Run configuration: a JSON file merged with command-line overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use salcap::attention::Variant;
use salcap::data_io::GridSpec;
use salcap::decoder::ModelConfig;
use salcap::optim::TrainConfig;
use serde::{Deserialize, Serialize};

/// Overrides the configured seed when set.
pub const SEED_ENV: &str = "SALCAP_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSizes {
    pub hidden: usize,
    pub embed: usize,
    /// Projected feature channels.
    pub feature_dim: usize,
    pub att_dim: usize,
}

impl Default for ModelSizes {
    fn default() -> Self {
        ModelSizes {
            hidden: 64,
            embed: 32,
            feature_dim: 32,
            att_dim: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub variant: Variant,
    pub model: ModelSizes,
    /// Expected feature grid; checked against the manifest when set.
    pub grid: Option<GridSpec>,
    pub min_count: usize,
    pub train: TrainConfig,
    pub manifest: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            variant: Variant::SaliencyContext,
            model: ModelSizes::default(),
            grid: None,
            min_count: 1,
            train: TrainConfig::default(),
            manifest: None,
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies `SALCAP_SEED` if present.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Some(seed) = seed_from_env()? {
            self.train.seed = seed;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.min_count == 0 {
            bail!("min_count must be at least 1");
        }
        let probe = self.model_config(1, 4);
        probe.validate()?;
        if let Some(g) = self.grid {
            if g.rows == 0 || g.cols == 0 {
                bail!("grid rows and cols must be positive");
            }
        }
        Ok(())
    }

    pub fn model_config(&self, raw_feature_dim: usize, vocab_size: usize) -> ModelConfig {
        ModelConfig {
            variant: self.variant,
            raw_feature_dim,
            feature_dim: self.model.feature_dim,
            hidden: self.model.hidden,
            embed: self.model.embed,
            att_dim: self.model.att_dim,
            vocab_size,
        }
    }
}

pub fn seed_from_env() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .with_context(|| format!("{SEED_ENV}=`{v}` is not an unsigned integer")),
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(e).context(SEED_ENV),
    }
}
