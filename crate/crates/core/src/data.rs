//! Datasets, synthetic blobs and stratified splitting.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::matrix::{squared_distance, Matrix};
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Height, width and channel count of image-shaped samples. Samples are
/// stored flattened in channel-major (CHW) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageShape {
    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Matrix,
    labels: Option<Vec<usize>>,
    image_shape: Option<ImageShape>,
}

impl Dataset {
    pub fn new(
        samples: Matrix,
        labels: Option<Vec<usize>>,
        image_shape: Option<ImageShape>,
    ) -> Result<Self> {
        if let Some(l) = &labels {
            if l.len() != samples.rows() {
                return Err(Error::dim("dataset labels", samples.rows(), l.len()));
            }
        }
        if let Some(shape) = image_shape {
            if shape.len() != samples.cols() {
                return Err(Error::dim("image shape", samples.cols(), shape.len()));
            }
        }
        if !samples.is_finite() {
            return Err(Error::Data("non-finite feature value".into()));
        }
        Ok(Dataset {
            samples,
            labels,
            image_shape,
        })
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn image_shape(&self) -> Option<ImageShape> {
        self.image_shape
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    /// One past the largest label, or 0 when unlabeled.
    pub fn num_classes(&self) -> usize {
        self.labels
            .as_ref()
            .and_then(|l| l.iter().max())
            .map_or(0, |m| m + 1)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_rows(indices),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            image_shape: self.image_shape,
        }
    }

    /// Concatenates two datasets with compatible features. Labels survive
    /// only when both sides carry them.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        let samples = self.samples.vstack(&other.samples)?;
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(Dataset {
            samples,
            labels,
            image_shape: self.image_shape.or(other.image_shape),
        })
    }

    /// Rescales every feature column to [0, 1]. Constant columns become 0.
    pub fn normalize_min_max(&mut self) {
        let cols = self.samples.cols();
        let mut lo = vec![f64::INFINITY; cols];
        let mut hi = vec![f64::NEG_INFINITY; cols];
        for row in self.samples.iter_rows() {
            for (j, &v) in row.iter().enumerate() {
                lo[j] = lo[j].min(v);
                hi[j] = hi[j].max(v);
            }
        }
        for i in 0..self.samples.rows() {
            for (j, v) in self.samples.row_mut(i).iter_mut().enumerate() {
                let range = hi[j] - lo[j];
                *v = if range > 0.0 { (*v - lo[j]) / range } else { 0.0 };
            }
        }
    }

    /// Zero-pads image samples symmetrically to `height x width`
    /// (28x28 MNIST becomes 32x32 with a 2-pixel border).
    pub fn pad_images(&self, height: usize, width: usize) -> Result<Dataset> {
        let shape = self
            .image_shape
            .ok_or_else(|| Error::Data("padding needs image-shaped samples".into()))?;
        if height < shape.height || width < shape.width {
            return Err(Error::Config(format!(
                "cannot pad {}x{} images down to {}x{}",
                shape.height, shape.width, height, width
            )));
        }
        let top = (height - shape.height) / 2;
        let left = (width - shape.width) / 2;
        let out_shape = ImageShape {
            height,
            width,
            channels: shape.channels,
        };
        let mut out = Matrix::zeros(self.len(), out_shape.len());
        for i in 0..self.len() {
            let src = self.samples.row(i);
            let dst = out.row_mut(i);
            for c in 0..shape.channels {
                for y in 0..shape.height {
                    let s = (c * shape.height + y) * shape.width;
                    let d = (c * height + y + top) * width + left;
                    dst[d..d + shape.width].copy_from_slice(&src[s..s + shape.width]);
                }
            }
        }
        Dataset::new(out, self.labels.clone(), Some(out_shape))
    }

    fn class_members(&self) -> Result<Vec<Vec<usize>>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("operation needs labels".into()))?;
        let mut members = vec![Vec::new(); self.num_classes()];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        if let Some(class) = members.iter().position(|m| m.is_empty()) {
            return Err(Error::Stratification { class });
        }
        Ok(members)
    }
}

/// `ceil` that ignores representation noise such as `0.1 * 30 = 3.0000000000000004`.
fn ceil_count(x: f64) -> usize {
    libm::ceil(x - 1e-9).max(0.0) as usize
}

fn round_count(x: f64) -> usize {
    libm::round(x).max(0.0) as usize
}

/// Labeled, unlabeled and held-out parts of one dataset, plus the source
/// row indices of each part (sorted ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct SplitDataset {
    pub labeled: Dataset,
    pub unlabeled: Dataset,
    pub holdout: Dataset,
    pub labeled_indices: Vec<usize>,
    pub unlabeled_indices: Vec<usize>,
    pub holdout_indices: Vec<usize>,
    pub num_classes: usize,
}

impl SplitDataset {
    /// Labeled followed by unlabeled samples: everything the network may
    /// see during training.
    pub fn train_pool(&self) -> Result<Dataset> {
        self.labeled.concat(&self.unlabeled)
    }
}

/// Stratified three-way split.
///
/// Per class, the holdout takes `round(holdout_frac * n)` samples (always
/// leaving one behind), then `ceil(labeled_frac * remaining)` of the rest
/// (at least one) become labeled.
pub fn split(
    dataset: &Dataset,
    labeled_frac: f64,
    holdout_frac: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(labeled_frac > 0.0 && labeled_frac <= 1.0) {
        return Err(Error::Config(format!(
            "labeled fraction {labeled_frac} outside (0, 1]"
        )));
    }
    if !(0.0..1.0).contains(&holdout_frac) {
        return Err(Error::Config(format!(
            "holdout fraction {holdout_frac} outside [0, 1)"
        )));
    }
    let members = dataset.class_members()?;
    let mut rng = rng::stream(seed, Stream::Split);
    let (mut labeled, mut unlabeled, mut holdout) = (Vec::new(), Vec::new(), Vec::new());
    for mut class in members {
        class.shuffle(&mut rng);
        let n = class.len();
        let n_holdout = round_count(holdout_frac * n as f64).min(n - 1);
        let remaining = n - n_holdout;
        let n_labeled = ceil_count(labeled_frac * remaining as f64).clamp(1, remaining);
        holdout.extend_from_slice(&class[..n_holdout]);
        labeled.extend_from_slice(&class[n_holdout..n_holdout + n_labeled]);
        unlabeled.extend_from_slice(&class[n_holdout + n_labeled..]);
    }
    labeled.sort_unstable();
    unlabeled.sort_unstable();
    holdout.sort_unstable();
    Ok(SplitDataset {
        labeled: dataset.subset(&labeled),
        unlabeled: dataset.subset(&unlabeled),
        holdout: dataset.subset(&holdout),
        labeled_indices: labeled,
        unlabeled_indices: unlabeled,
        holdout_indices: holdout,
        num_classes: dataset.num_classes(),
    })
}

/// Draws `size` rows with per-class counts proportional to class sizes
/// (largest remainders get the leftover slots).
pub fn stratified_subset(dataset: &Dataset, size: usize, seed: u64) -> Result<Dataset> {
    if size > dataset.len() {
        return Err(Error::Config(format!(
            "subset of {size} from {} samples",
            dataset.len()
        )));
    }
    let members = dataset.class_members()?;
    let n = dataset.len() as f64;
    let mut quota: Vec<(usize, f64)> = members
        .iter()
        .map(|m| {
            let exact = size as f64 * m.len() as f64 / n;
            (libm::floor(exact) as usize, exact - libm::floor(exact))
        })
        .collect();
    let mut leftover = size - quota.iter().map(|q| q.0).sum::<usize>();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| quota[b].1.total_cmp(&quota[a].1).then(a.cmp(&b)));
    for &c in order.iter().cycle() {
        if leftover == 0 {
            break;
        }
        if quota[c].0 < members[c].len() {
            quota[c].0 += 1;
            leftover -= 1;
        }
    }
    let mut rng = rng::stream(seed, Stream::Subset);
    let mut picked = Vec::with_capacity(size);
    for (mut class, (take, _)) in members.into_iter().zip(quota) {
        class.shuffle(&mut rng);
        picked.extend_from_slice(&class[..take]);
    }
    picked.sort_unstable();
    Ok(dataset.subset(&picked))
}

/// `k` isotropic Gaussian clusters of `per_cluster` points each, labeled by
/// their generating cluster and ordered by label. Cluster means sit at
/// pairwise distance of at least `10 * spread`.
pub fn make_blobs(
    k: usize,
    per_cluster: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if k < 2 || per_cluster < 1 || dim < 1 || !(spread > 0.0) {
        return Err(Error::Config(format!(
            "make_blobs needs k >= 2, per_cluster >= 1, dim >= 1, spread > 0 (got {k}, {per_cluster}, {dim}, {spread})"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Blobs);
    let min_sep = 10.0 * spread;
    let half_width = min_sep * k as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while centers.len() < k && attempts < 10_000 {
        attempts += 1;
        let c: Vec<f64> = (0..dim)
            .map(|_| rng.random_range(-half_width..half_width))
            .collect();
        if centers
            .iter()
            .all(|o| squared_distance(o, &c) >= min_sep * min_sep)
        {
            centers.push(c);
        }
    }
    if centers.len() < k {
        // Crowded low-dimensional boxes: fall back to a lattice on axis 0.
        centers = (0..k)
            .map(|i| {
                let mut c = vec![0.0; dim];
                c[0] = i as f64 * min_sep * 1.5;
                c
            })
            .collect();
    }
    let mut data = Vec::with_capacity(k * per_cluster * dim);
    let mut labels = Vec::with_capacity(k * per_cluster);
    for (label, center) in centers.iter().enumerate() {
        for _ in 0..per_cluster {
            for &m in center {
                let z: f64 = rng.sample(StandardNormal);
                data.push(m + spread * z);
            }
            labels.push(label);
        }
    }
    Dataset::new(Matrix::from_vec(k * per_cluster, dim, data)?, Some(labels), None)
}
