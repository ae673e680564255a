//! Loss terms and their gradients.
//!
//! Pairwise terms compare distance-softmax membership vectors with KL
//! divergence. Each directed term `KL(p || q)` treats `p` as a constant, so
//! it sends gradient to `q` only; the symmetric sum therefore reaches both
//! members of a pair.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::clustering::{Assignment, ClusterState};
use crate::constraints::PairSet;
use crate::matrix::Matrix;
use crate::{Error, Result};

/// Floor applied to the denominator inside the KL logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

/// `KL(p || q) = sum_i p_i ln(p_i / q_i)` with `0 ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::dim("kl divergence", p.len(), q.len()));
    }
    Ok(kl_unchecked(p, q))
}

fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * libm::log(pi / qi.max(LOG_FLOOR)))
        .sum()
}

/// `KL(p || q) + KL(q || p)`.
pub fn symmetric_kl(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(kl_divergence(p, q)? + kl_divergence(q, p)?)
}

/// Adds `scale * d KL(fixed || moving) / d moving` into `grad`.
fn accumulate_kl_grad(grad: &mut [f64], fixed: &[f64], moving: &[f64], scale: f64) {
    for ((g, &f), &m) in grad.iter_mut().zip(fixed).zip(moving) {
        if f > 0.0 && m > LOG_FLOOR {
            *g -= scale * f / m;
        }
    }
}

/// Mean symmetric KL over similar pairs plus mean hinge
/// `max(0, m - KL(p||q)) + max(0, m - KL(q||p))` over dissimilar pairs.
/// An empty set contributes zero. Returns the loss and `dL/dP`, one row
/// per probability row.
pub fn pairwise_loss(probabilities: &Matrix, pairs: &PairSet, margin: f64) -> Result<(f64, Matrix)> {
    if !(margin > 0.0) {
        return Err(Error::Config(format!("margin must be positive, got {margin}")));
    }
    let n = probabilities.rows();
    for &(i, j) in pairs.similar.iter().chain(&pairs.dissimilar) {
        let worst = i.max(j);
        if worst >= n {
            return Err(Error::dim("pair index bound", n, worst + 1));
        }
    }
    let mut grads = Matrix::zeros(n, probabilities.cols());
    let mut loss = 0.0;

    if !pairs.similar.is_empty() {
        let scale = 1.0 / pairs.similar.len() as f64;
        for &(i, j) in &pairs.similar {
            let (p, q) = (probabilities.row(i), probabilities.row(j));
            loss += scale * (kl_unchecked(p, q) + kl_unchecked(q, p));
            accumulate_kl_grad(grads.row_mut(j), p, q, scale);
            accumulate_kl_grad(grads.row_mut(i), q, p, scale);
        }
    }
    if !pairs.dissimilar.is_empty() {
        let scale = 1.0 / pairs.dissimilar.len() as f64;
        for &(i, j) in &pairs.dissimilar {
            let (p, q) = (probabilities.row(i), probabilities.row(j));
            let forward = margin - kl_unchecked(p, q);
            if forward > 0.0 {
                loss += scale * forward;
                accumulate_kl_grad(grads.row_mut(j), p, q, -scale);
            }
            let reverse = margin - kl_unchecked(q, p);
            if reverse > 0.0 {
                loss += scale * reverse;
                accumulate_kl_grad(grads.row_mut(i), q, p, -scale);
            }
        }
    }
    Ok((loss, grads))
}

/// Mean squared distance of each latent to its assigned center. Returns the
/// loss, `dL/dz` per row and `dL/dC` per center row.
pub fn cluster_loss(latents: &Matrix, state: &ClusterState, assignments: &[Assignment]) -> Result<(f64, Matrix, Matrix)> {
    if assignments.len() != latents.rows() {
        return Err(Error::dim("cluster loss assignments", latents.rows(), assignments.len()));
    }
    if latents.rows() > 0 && latents.cols() != state.dim() {
        return Err(Error::dim("cluster loss latent", state.dim(), latents.cols()));
    }
    let mut latent_grads = Matrix::zeros(latents.rows(), state.dim());
    let mut center_grads = Matrix::zeros(state.num_clusters(), state.dim());
    if latents.rows() == 0 {
        return Ok((0.0, latent_grads, center_grads));
    }
    let scale = 1.0 / latents.rows() as f64;
    let mut loss = 0.0;
    for (i, (z, a)) in latents.iter_rows().zip(assignments).enumerate() {
        if a.cluster >= state.num_clusters() {
            return Err(Error::LabelOutOfRange { label: a.cluster, k: state.num_clusters() });
        }
        let mu = state.center(a.cluster);
        for (c, (&zi, &mi)) in z.iter().zip(mu).enumerate() {
            let diff = zi - mi;
            loss += scale * diff * diff;
            latent_grads[(i, c)] = 2.0 * scale * diff;
            center_grads[(a.cluster, c)] -= 2.0 * scale * diff;
        }
    }
    Ok((loss, latent_grads, center_grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// Divide the summed squared error by the number of rows.
    #[default]
    Mean,
    /// Plain sum over rows.
    Sum,
}

/// Squared reconstruction error summed over features, reduced over rows.
pub fn reconstruction_loss(reconstructions: &Matrix, inputs: &Matrix, reduction: Reduction) -> Result<(f64, Matrix)> {
    if reconstructions.rows() != inputs.rows() || reconstructions.cols() != inputs.cols() {
        return Err(Error::dim(
            "reconstruction",
            inputs.rows() * inputs.cols(),
            reconstructions.rows() * reconstructions.cols(),
        ));
    }
    let scale = match reduction {
        Reduction::Mean if inputs.rows() > 0 => 1.0 / inputs.rows() as f64,
        _ => 1.0,
    };
    let mut grads = reconstructions.clone();
    let mut loss = 0.0;
    for (g, &x) in grads.as_mut_slice().iter_mut().zip(inputs.as_slice()) {
        let diff = *g - x;
        loss += diff * diff;
        *g = 2.0 * scale * diff;
    }
    Ok((scale * loss, grads))
}

/// Weight on the unlabeled terms at (0-based) epoch `epoch`: zero before
/// `t1`, a linear ramp `(epoch - t1) / (t2 - t1)` up to `t2`, then one.
pub fn lambda_schedule(epoch: usize, t1: usize, t2: usize) -> Result<f64> {
    if t1 >= t2 {
        return Err(Error::Config(format!("annealing needs T1 < T2, got {t1} >= {t2}")));
    }
    Ok(if epoch < t1 {
        0.0
    } else if epoch >= t2 {
        1.0
    } else {
        (epoch - t1) as f64 / (t2 - t1) as f64
    })
}

/// Unweighted loss terms for one batch or epoch.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub pair_labeled: f64,
    pub cluster_labeled: f64,
    pub pair_unlabeled: f64,
    pub cluster_unlabeled: f64,
    pub reconstruction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub pair_labeled: f64,
    pub cluster_labeled: f64,
    pub pair_unlabeled: f64,
    pub cluster_unlabeled: f64,
    pub reconstruction: f64,
    pub lambda: f64,
    pub total: f64,
}

/// `labeled terms + lambda * unlabeled terms + reconstruction`.
pub fn total_loss(c: LossComponents, lambda: f64) -> Result<LossBreakdown> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(LossBreakdown {
        pair_labeled: c.pair_labeled,
        cluster_labeled: c.cluster_labeled,
        pair_unlabeled: c.pair_unlabeled,
        cluster_unlabeled: c.cluster_unlabeled,
        reconstruction: c.reconstruction,
        lambda,
        total: c.pair_labeled + c.cluster_labeled + lambda * (c.pair_unlabeled + c.cluster_unlabeled) + c.reconstruction,
    })
}

impl LossComponents {
    pub fn scaled(self, s: f64) -> Self {
        LossComponents {
            pair_labeled: s * self.pair_labeled,
            cluster_labeled: s * self.cluster_labeled,
            pair_unlabeled: s * self.pair_unlabeled,
            cluster_unlabeled: s * self.cluster_unlabeled,
            reconstruction: s * self.reconstruction,
        }
    }

    pub fn add(self, o: Self) -> Self {
        LossComponents {
            pair_labeled: self.pair_labeled + o.pair_labeled,
            cluster_labeled: self.cluster_labeled + o.cluster_labeled,
            pair_unlabeled: self.pair_unlabeled + o.pair_unlabeled,
            cluster_unlabeled: self.cluster_unlabeled + o.cluster_unlabeled,
            reconstruction: self.reconstruction + o.reconstruction,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.pair_labeled, self.cluster_labeled, self.pair_unlabeled, self.cluster_unlabeled, self.reconstruction]
            .iter()
            .all(|v| v.is_finite())
    }
}
