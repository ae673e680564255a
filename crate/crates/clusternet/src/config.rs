//! Run configuration: a JSON file, command-line overrides on top, and the
//! resolved result written next to every run's outputs.

use std::fs;
use std::path::{Path, PathBuf};

use clusternet_core::data::{make_blobs, split, stratified_subset, Dataset, SplitDataset};
use clusternet_core::network::NetworkSpec;
use clusternet_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idx;
use crate::table::{self, CsvOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// Explicit IDX image and label files.
    Idx { images: PathBuf, labels: PathBuf },
    /// A directory holding an MNIST-style IDX pair.
    IdxDir { dir: PathBuf },
    Csv {
        path: PathBuf,
        #[serde(default)]
        options: CsvOptions,
    },
    Blobs { k: usize, per_cluster: usize, dim: usize, spread: f64, seed: u64 },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Blobs { k: 4, per_cluster: 200, dim: 2, spread: 0.3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct DataConfig {
    pub source: DataSource,
    /// Stratified subset size taken before splitting.
    pub subset: Option<usize>,
    pub subset_seed: u64,
    /// Zero-pad images to `(height, width)`, e.g. 28x28 MNIST to 32x32.
    pub pad_to: Option<(usize, usize)>,
    /// Per-feature min-max scaling to `[0, 1]`. Unset means on for CSV and
    /// blobs, off for IDX images (already scaled by 1/255).
    pub normalize: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub labeled_frac: f64,
    pub holdout_frac: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { labeled_frac: 0.02, holdout_frac: 0.10, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    /// Dense encoder, `input -> 500 -> 128 -> 32` unless overridden.
    #[default]
    Mlp,
    /// Three stride-2 convolutions then a dense latent layer.
    Conv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct NetworkConfig {
    pub architecture: Architecture,
    /// Hidden widths for the MLP.
    pub hidden: Option<Vec<usize>>,
    pub latent_dim: Option<usize>,
}

impl NetworkConfig {
    pub fn spec_for(&self, data: &Dataset) -> Result<NetworkSpec> {
        let mut spec = match self.architecture {
            Architecture::Mlp => match &self.hidden {
                Some(h) => NetworkSpec::dense(data.dim(), h, 32),
                None => NetworkSpec::mlp(data.dim()),
            },
            Architecture::Conv => {
                let shape = data
                    .image_shape()
                    .ok_or_else(|| Error::Usage("the conv architecture needs image data".into()))?;
                NetworkSpec::conv(shape)
            }
        };
        if let Some(d) = self.latent_dim {
            spec.latent_dim = d;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub split: SplitConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        let s = &self.split;
        if !(s.labeled_frac > 0.0 && s.labeled_frac <= 1.0) {
            return Err(Error::Usage(format!("labeled fraction {} outside (0, 1]", s.labeled_frac)));
        }
        if !(0.0..1.0).contains(&s.holdout_frac) {
            return Err(Error::Usage(format!("holdout fraction {} outside [0, 1)", s.holdout_frac)));
        }
        Ok(())
    }

    /// Loads, subsets, pads and scales the dataset.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let d = &self.data;
        let (mut data, default_normalize) = match &d.source {
            DataSource::Idx { images, labels } => (idx::load_dataset(images, labels)?, false),
            DataSource::IdxDir { dir } => {
                let (images, labels) = idx::find_in_dir(dir)?;
                (idx::load_dataset(images, labels)?, false)
            }
            DataSource::Csv { path, options } => (table::read_csv(path, *options)?, true),
            DataSource::Blobs { k, per_cluster, dim, spread, seed } => {
                (make_blobs(*k, *per_cluster, *dim, *spread, *seed)?, true)
            }
        };
        if let Some(n) = d.subset {
            data = stratified_subset(&data, n, d.subset_seed)?;
        }
        if let Some((h, w)) = d.pad_to {
            data = data.pad_images(h, w)?;
        }
        if d.normalize.unwrap_or(default_normalize) {
            data.normalize_min_max();
        }
        Ok(data)
    }

    pub fn split(&self, data: &Dataset) -> Result<SplitDataset> {
        Ok(split(data, self.split.labeled_frac, self.split.holdout_frac, self.split.seed)?)
    }
}
