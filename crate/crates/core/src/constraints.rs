//! Must-link / cannot-link pairs within a batch.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::clustering::Assignment;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairSource {
    Labeled,
    Predicted,
}

/// Unordered index pairs `(i, j)` with `i < j`, split by whether the two
/// samples share a class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub similar: Vec<(usize, usize)>,
    pub dissimilar: Vec<(usize, usize)>,
    pub source: PairSource,
}

impl PairSet {
    pub fn empty(source: PairSource) -> Self {
        PairSet { similar: Vec::new(), dissimilar: Vec::new(), source }
    }

    pub fn len(&self) -> usize {
        self.similar.len() + self.dissimilar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn enumerate(ids: impl ExactSizeIterator<Item = usize> + Clone, source: PairSource) -> PairSet {
    let ids: Vec<usize> = ids.collect();
    let mut set = PairSet::empty(source);
    for i in 0..ids.len() {
        for j in i + 1..ids.len() {
            if ids[i] == ids[j] {
                set.similar.push((i, j));
            } else {
                set.dissimilar.push((i, j));
            }
        }
    }
    set
}

/// All pairs of a labeled batch; same label means similar.
pub fn pairs_from_labels(labels: &[usize]) -> PairSet {
    enumerate(labels.iter().copied(), PairSource::Labeled)
}

/// Same rule keyed on predicted clusters.
pub fn pairs_from_predictions(assignments: &[Assignment]) -> PairSet {
    enumerate(assignments.iter().map(|a| a.cluster), PairSource::Predicted)
}

fn subsample<R: Rng + ?Sized>(pairs: &[(usize, usize)], cap: usize, rng: &mut R) -> Vec<(usize, usize)> {
    if pairs.len() <= cap {
        return pairs.to_vec();
    }
    let mut picked = index::sample(rng, pairs.len(), cap).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|i| pairs[i]).collect()
}

/// Uniform subsample without replacement of each set down to its cap,
/// keeping the original order. Sets already within their cap pass through.
pub fn sample_pairs<R: Rng + ?Sized>(pairs: &PairSet, max_similar: usize, max_dissimilar: usize, rng: &mut R) -> PairSet {
    PairSet {
        similar: subsample(&pairs.similar, max_similar, rng),
        dissimilar: subsample(&pairs.dissimilar, max_dissimilar, rng),
        source: pairs.source,
    }
}
