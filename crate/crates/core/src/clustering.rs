//! Cluster centers: labeled-mean initialization, hard assignment,
//! count-scaled center updates, distance-softmax membership probabilities,
//! and the batch constrained k-means baseline.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::matrix::{squared_distance, Matrix};
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// Index of the nearest row of `centers`; ties go to the lowest index.
pub fn nearest_center(centers: &Matrix, point: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (k, c) in centers.iter_rows().enumerate() {
        let d = squared_distance(c, point);
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    best
}

/// Hard cluster membership of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub cluster: usize,
    pub num_clusters: usize,
    /// True when membership comes from a ground-truth label.
    pub labeled: bool,
}

impl Assignment {
    pub fn one_hot(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.num_clusters];
        v[self.cluster] = 1.0;
        v
    }
}

/// Membership forced by a ground-truth label.
pub fn assign_labeled(label: usize, k: usize) -> Result<Assignment> {
    if label >= k {
        return Err(Error::LabelOutOfRange { label, k });
    }
    Ok(Assignment { cluster: label, num_clusters: k, labeled: true })
}

/// Centers stored one per row (`K x d`), plus per-cluster update counts for
/// labeled and unlabeled samples since the last [`reset_counts`](Self::reset_counts).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    centers: Matrix,
    labeled_counts: Vec<u64>,
    unlabeled_counts: Vec<u64>,
}

impl ClusterState {
    pub fn from_centers(centers: Matrix) -> Result<Self> {
        if centers.rows() < 2 {
            return Err(Error::Config(format!("need at least 2 clusters, got {}", centers.rows())));
        }
        if !centers.is_finite() {
            return Err(Error::NonFinite { what: "cluster center", index: 0 });
        }
        let k = centers.rows();
        Ok(ClusterState { centers, labeled_counts: vec![0; k], unlabeled_counts: vec![0; k] })
    }

    /// Restores a saved state, counts included.
    pub fn from_parts(centers: Matrix, labeled_counts: Vec<u64>, unlabeled_counts: Vec<u64>) -> Result<Self> {
        let mut state = Self::from_centers(centers)?;
        let k = state.num_clusters();
        for counts in [&labeled_counts, &unlabeled_counts] {
            if counts.len() != k {
                return Err(Error::dim("cluster counts", k, counts.len()));
            }
        }
        state.labeled_counts = labeled_counts;
        state.unlabeled_counts = unlabeled_counts;
        Ok(state)
    }

    /// Center `k` is the mean of the latents labeled `k`.
    pub fn init_centers(latents: &Matrix, labels: &[usize], k: usize) -> Result<Self> {
        if labels.len() != latents.rows() {
            return Err(Error::dim("center init labels", latents.rows(), labels.len()));
        }
        Self::from_centers(class_means(latents, labels, k)?)
    }

    pub fn num_clusters(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    pub fn centers(&self) -> &Matrix {
        &self.centers
    }

    pub fn center(&self, k: usize) -> &[f64] {
        self.centers.row(k)
    }

    pub fn labeled_counts(&self) -> &[u64] {
        &self.labeled_counts
    }

    pub fn unlabeled_counts(&self) -> &[u64] {
        &self.unlabeled_counts
    }

    pub fn reset_counts(&mut self) {
        self.labeled_counts.fill(0);
        self.unlabeled_counts.fill(0);
    }

    fn check_dim(&self, latent: &[f64]) -> Result<()> {
        if latent.len() != self.dim() {
            return Err(Error::dim("latent", self.dim(), latent.len()));
        }
        Ok(())
    }

    /// Nearest center in squared Euclidean distance.
    pub fn assign_unlabeled(&self, latent: &[f64]) -> Result<Assignment> {
        self.check_dim(latent)?;
        Ok(Assignment {
            cluster: nearest_center(&self.centers, latent),
            num_clusters: self.num_clusters(),
            labeled: false,
        })
    }

    fn step_towards(&mut self, k: usize, latent: &[f64], count: u64) {
        let rate = 1.0 / count as f64;
        for (mu, &z) in self.centers.row_mut(k).iter_mut().zip(latent) {
            *mu -= rate * (*mu - z);
        }
    }

    /// `N_k += 1; mu_k -= (mu_k - z) / N_k` using the labeled count.
    pub fn update_center_labeled(&mut self, latent: &[f64], label: usize) -> Result<()> {
        self.check_dim(latent)?;
        if label >= self.num_clusters() {
            return Err(Error::LabelOutOfRange { label, k: self.num_clusters() });
        }
        self.labeled_counts[label] += 1;
        let n = self.labeled_counts[label];
        self.step_towards(label, latent, n);
        Ok(())
    }

    /// Same recurrence as the labeled update, on the unlabeled count of the
    /// assigned cluster.
    pub fn update_center_unlabeled(&mut self, latent: &[f64], assignment: &Assignment) -> Result<()> {
        self.check_dim(latent)?;
        if assignment.cluster >= self.num_clusters() || assignment.num_clusters != self.num_clusters() {
            return Err(Error::LabelOutOfRange { label: assignment.cluster, k: self.num_clusters() });
        }
        let k = assignment.cluster;
        self.unlabeled_counts[k] += 1;
        let n = self.unlabeled_counts[k];
        self.step_towards(k, latent, n);
        Ok(())
    }

    /// `p_k = exp(-d_k) / sum_j exp(-d_j)` with `d_k = |z - mu_k|^2`.
    pub fn assignment_probabilities(&self, latent: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(latent)?;
        let d: Vec<f64> = self.centers.iter_rows().map(|c| squared_distance(c, latent)).collect();
        Ok(softmax_neg(&d))
    }

    /// Pulls `dL/dp` back through [`assignment_probabilities`](Self::assignment_probabilities)
    /// to `dL/dz`, holding the centers fixed.
    pub fn probabilities_backward(&self, latent: &[f64], probs: &[f64], grad_probs: &[f64]) -> Vec<f64> {
        let dot: f64 = probs.iter().zip(grad_probs).map(|(p, g)| p * g).sum();
        let mut grad = vec![0.0; latent.len()];
        for (k, c) in self.centers.iter_rows().enumerate() {
            // dL/dd_k = -p_k (g_k - <g, p>); dd_k/dz = 2 (z - mu_k)
            let dd = -probs[k] * (grad_probs[k] - dot);
            if dd != 0.0 {
                for ((g, &z), &mu) in grad.iter_mut().zip(latent).zip(c) {
                    *g += dd * 2.0 * (z - mu);
                }
            }
        }
        grad
    }
}

/// Softmax of `-d`, shifted by `min d` so the largest exponent is zero.
pub fn softmax_neg(d: &[f64]) -> Vec<f64> {
    let shift = d.iter().copied().fold(f64::INFINITY, f64::min);
    let mut p: Vec<f64> = d.iter().map(|&v| libm::exp(-(v - shift))).collect();
    let total: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= total);
    p
}

fn class_means(points: &Matrix, labels: &[usize], k: usize) -> Result<Matrix> {
    let mut sums = Matrix::zeros(k, points.cols());
    let mut counts = vec![0usize; k];
    for (row, &l) in points.iter_rows().zip(labels) {
        if l >= k {
            return Err(Error::LabelOutOfRange { label: l, k });
        }
        counts[l] += 1;
        for (s, v) in sums.row_mut(l).iter_mut().zip(row) {
            *s += v;
        }
    }
    if let Some(class) = counts.iter().position(|&c| c == 0) {
        return Err(Error::EmptyClass { class });
    }
    for (c, &n) in counts.iter().enumerate() {
        sums.row_mut(c).iter_mut().for_each(|s| *s /= n as f64);
    }
    Ok(sums)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    /// One center per row.
    pub centers: Matrix,
    /// Cluster of each unlabeled point.
    pub assignments: Vec<usize>,
    /// Center recomputations performed.
    pub iterations: usize,
    pub converged: bool,
    /// Sum of squared distances (labeled and unlabeled) to assigned
    /// centers, recorded at every assignment step.
    pub objective: Vec<f64>,
}

/// Constrained k-means: centers start at labeled class means, labeled
/// points stay in their class, unlabeled points move to the nearest center.
/// Stops when no unlabeled assignment changes or after `max_iter` center
/// recomputations.
pub fn constrained_kmeans(
    unlabeled: &Matrix,
    labeled: &Matrix,
    labels: &[usize],
    k: usize,
    max_iter: usize,
) -> Result<KMeansResult> {
    if labels.len() != labeled.rows() {
        return Err(Error::dim("labeled points", labeled.rows(), labels.len()));
    }
    let init = class_means(labeled, labels, k)?;
    constrained_kmeans_from(unlabeled, labeled, labels, init, max_iter)
}

/// [`constrained_kmeans`] from explicit starting centers. With no labeled
/// points this is Lloyd's algorithm. A cluster left empty keeps its
/// previous center.
pub fn constrained_kmeans_from(
    unlabeled: &Matrix,
    labeled: &Matrix,
    labels: &[usize],
    init_centers: Matrix,
    max_iter: usize,
) -> Result<KMeansResult> {
    let k = init_centers.rows();
    let dim = init_centers.cols();
    if labels.len() != labeled.rows() {
        return Err(Error::dim("labeled points", labeled.rows(), labels.len()));
    }
    if unlabeled.rows() > 0 && unlabeled.cols() != dim {
        return Err(Error::dim("unlabeled points", dim, unlabeled.cols()));
    }
    if labeled.rows() > 0 && labeled.cols() != dim {
        return Err(Error::dim("labeled points", dim, labeled.cols()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::LabelOutOfRange { label: l, k });
    }
    let mut centers = init_centers;
    let mut assignments = vec![usize::MAX; unlabeled.rows()];
    let mut objective = Vec::new();
    let mut iterations = 0;
    let converged = loop {
        let mut changed = 0;
        let mut cost = 0.0;
        for (a, x) in assignments.iter_mut().zip(unlabeled.iter_rows()) {
            let c = nearest_center(&centers, x);
            if c != *a {
                changed += 1;
                *a = c;
            }
            cost += squared_distance(x, centers.row(c));
        }
        for (x, &l) in labeled.iter_rows().zip(labels) {
            cost += squared_distance(x, centers.row(l));
        }
        objective.push(cost);
        if changed == 0 {
            break true;
        }
        if iterations == max_iter {
            break false;
        }
        let mut sums = Matrix::zeros(k, dim);
        let mut counts = vec![0usize; k];
        let members = labeled
            .iter_rows()
            .zip(labels.iter().copied())
            .chain(unlabeled.iter_rows().zip(assignments.iter().copied()));
        for (x, c) in members {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let n = counts[c] as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s / n;
                }
            }
        }
        iterations += 1;
    };
    Ok(KMeansResult { centers, assignments, iterations, converged, objective })
}

/// k-means++ seeding: the first center uniformly, each next one with
/// probability proportional to squared distance from the nearest chosen.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(data: &Matrix, k: usize, rng: &mut R) -> Result<Matrix> {
    if k == 0 || data.rows() < k {
        return Err(Error::Config(format!("cannot seed {k} centers from {} points", data.rows())));
    }
    let mut chosen = vec![rng.random_range(0..data.rows())];
    let mut dist: Vec<f64> = data.iter_rows().map(|x| squared_distance(x, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = dist.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = dist.len() - 1;
            for (i, &d) in dist.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // all points coincide with chosen centers
            (0..data.rows()).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (d, x) in dist.iter_mut().zip(data.iter_rows()) {
            *d = d.min(squared_distance(x, data.row(next)));
        }
    }
    Ok(data.select_rows(&chosen))
}

/// Unsupervised k-means: `restarts` k-means++ runs, keeping the lowest
/// final objective (first wins on ties).
pub fn kmeans(data: &Matrix, k: usize, restarts: usize, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    let mut rng = rng::stream(seed, Stream::KMeans);
    let empty = Matrix::zeros(0, data.cols());
    let mut best: Option<KMeansResult> = None;
    for _ in 0..restarts.max(1) {
        let init = kmeans_plus_plus(data, k, &mut rng)?;
        let run = constrained_kmeans_from(data, &empty, &[], init, max_iter)?;
        let better = best.as_ref().is_none_or(|b| {
            run.objective.last().unwrap_or(&0.0) < b.objective.last().unwrap_or(&0.0)
        });
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}
