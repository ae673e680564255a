//! Reconstruction pretraining, ClusterNet fine-tuning and prediction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::{index, SliceRandom};
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::clustering::{assign_labeled, nearest_center, ClusterState};
use crate::constraints::{pairs_from_labels, pairs_from_predictions, sample_pairs};
use crate::data::{Dataset, SplitDataset};
use crate::losses::{cluster_loss, lambda_schedule, pairwise_loss, reconstruction_loss, total_loss, LossBreakdown, LossComponents, Reduction};
use crate::matrix::Matrix;
use crate::metrics::{score, Scores};
use crate::network::NetworkParameters;
use crate::rng::{self, Stream};
use crate::{Error, Result};

/// When the per-cluster update counts go back to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CountReset {
    #[default]
    Epoch,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub learning_rate: f64,
    pub adam_betas: (f64, f64),
    pub t1: usize,
    pub t2: usize,
    pub margin: f64,
    pub batch_size: usize,
    /// Labeled samples mixed into each fine-tuning batch (capped at the
    /// labeled pool size).
    pub labeled_per_batch: usize,
    pub max_similar_pairs: usize,
    pub max_dissimilar_pairs: usize,
    pub count_reset: CountReset,
    pub reconstruction: Reduction,
    /// Dropout during fine-tuning. Off by default: centers restart from
    /// single latents after each count reset, and dropout noise on those
    /// latents makes nearby clusters trade members from epoch to epoch.
    pub finetune_dropout: bool,
    pub seed: u64,
    /// Keep a log of every center update in the report.
    pub record_center_updates: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            pretrain_epochs: 100,
            finetune_epochs: 60,
            learning_rate: 1e-4,
            adam_betas: (0.9, 0.999),
            t1: 5,
            t2: 40,
            margin: 2.0,
            batch_size: 256,
            labeled_per_batch: 64,
            max_similar_pairs: 256,
            max_dissimilar_pairs: 256,
            count_reset: CountReset::Epoch,
            reconstruction: Reduction::Mean,
            finetune_dropout: false,
            seed: 0,
            record_center_updates: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if self.labeled_per_batch == 0 {
            return fail("labeled_per_batch must be positive".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        let (b1, b2) = self.adam_betas;
        if !((0.0..1.0).contains(&b1) && (0.0..1.0).contains(&b2)) {
            return fail(format!("adam betas must lie in [0, 1), got ({b1}, {b2})"));
        }
        if !(self.margin.is_finite() && self.margin > 0.0) {
            return fail(format!("margin must be positive, got {}", self.margin));
        }
        if self.t1 >= self.t2 {
            return fail(format!("annealing needs T1 < T2, got {} >= {}", self.t1, self.t2));
        }
        Ok(())
    }

    /// Legal but suspicious settings.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.t2 > self.finetune_epochs {
            out.push(format!(
                "T2 = {} exceeds finetune_epochs = {}; lambda never reaches 1",
                self.t2, self.finetune_epochs
            ));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Finetune,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Finetune => "finetune",
        }
    }
}

/// Batch-averaged losses for one epoch, plus scores on the unlabeled pool
/// when ground truth is available.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub phase: Phase,
    pub epoch: usize,
    pub batches: usize,
    pub loss: LossBreakdown,
    pub scores: Option<Scores>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CenterUpdate {
    pub epoch: usize,
    pub batch: usize,
    pub cluster: usize,
    /// Ground-truth class for labeled updates.
    pub class: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub center_updates: Vec<CenterUpdate>,
    pub final_state: Option<ClusterState>,
}

impl TrainReport {
    pub fn lambdas(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.loss.lambda).collect()
    }
}

fn diverged(phase: Phase, epoch: usize, batch: usize) -> Error {
    Error::Diverged { phase: phase.name(), epoch, batch }
}

/// Reconstruction-only training with dropout on shuffled mini-batches.
pub fn pretrain(params: &mut NetworkParameters, dataset: &Dataset, config: &TrainConfig) -> Result<TrainReport> {
    pretrain_with_observer(params, dataset, config, &mut |_| {})
}

pub fn pretrain_with_observer(
    params: &mut NetworkParameters,
    dataset: &Dataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainReport> {
    config.validate()?;
    if dataset.dim() != params.input_dim() {
        return Err(Error::dim("pretrain input", params.input_dim(), dataset.dim()));
    }
    let mut shuffle = rng::stream(config.seed, Stream::Shuffle);
    let mut dropout = rng::stream(config.seed, Stream::Dropout);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..config.pretrain_epochs {
        order.shuffle(&mut shuffle);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let x = dataset.samples().select_rows(chunk);
            let (z, enc) = params.encode(&x, config.finetune_dropout.then_some(&mut dropout as &mut dyn RngCore))?;
            let (recon, dec) = params.decode(&z, config.finetune_dropout.then_some(&mut dropout as &mut dyn RngCore))?;
            let (loss, grad) = reconstruction_loss(&recon, &x, config.reconstruction)?;
            if !loss.is_finite() {
                return Err(diverged(Phase::Pretrain, epoch, b));
            }
            let grads = params.backward(&enc, &dec, &grad, None)?;
            params
                .adam_step(&grads, config.learning_rate, config.adam_betas)
                .map_err(|_| diverged(Phase::Pretrain, epoch, b))?;
            sum += loss;
            batches += 1;
        }
        let mean = if batches > 0 { sum / batches as f64 } else { 0.0 };
        let components = LossComponents { reconstruction: mean, ..Default::default() };
        let record = EpochRecord {
            phase: Phase::Pretrain,
            epoch,
            batches,
            loss: total_loss(components, 0.0)?,
            scores: None,
        };
        observer(&record);
        report.epochs.push(record);
    }
    Ok(report)
}

/// Nearest-center cluster of each sample, encoded without dropout.
pub fn predict(params: &NetworkParameters, state: &ClusterState, samples: &Matrix) -> Result<Vec<usize>> {
    if samples.cols() != params.input_dim() {
        return Err(Error::dim("predict input", params.input_dim(), samples.cols()));
    }
    let z = params.embed(samples)?;
    if z.cols() != state.dim() {
        return Err(Error::dim("predict latent", state.dim(), z.cols()));
    }
    Ok(z.iter_rows().map(|row| nearest_center(state.centers(), row)).collect())
}

/// Centers at the class means of the labeled pool's latents.
pub fn initial_state(params: &NetworkParameters, split: &SplitDataset) -> Result<ClusterState> {
    let labels = split.labeled.labels().ok_or_else(|| Error::Data("labeled pool has no labels".into()))?;
    let latents = params.embed(split.labeled.samples())?;
    ClusterState::init_centers(&latents, labels, split.num_classes)
}

/// Joint optimization of the network and the cluster centers. Starts a
/// fresh Adam state.
pub fn train_clusternet(params: &mut NetworkParameters, split: &SplitDataset, config: &TrainConfig) -> Result<(ClusterState, TrainReport)> {
    train_clusternet_with_observer(params, split, config, &mut |_| {})
}

pub fn train_clusternet_with_observer(
    params: &mut NetworkParameters,
    split: &SplitDataset,
    config: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(ClusterState, TrainReport)> {
    config.validate()?;
    let labeled = &split.labeled;
    let unlabeled = &split.unlabeled;
    for d in [labeled, unlabeled] {
        if !d.is_empty() && d.dim() != params.input_dim() {
            return Err(Error::dim("finetune input", params.input_dim(), d.dim()));
        }
    }
    let labels = labeled.labels().ok_or_else(|| Error::Data("labeled pool has no labels".into()))?;
    let mut state = initial_state(params, split)?;
    let k = state.num_clusters();
    params.reset_optimizer();

    let n_l = labeled.len();
    let n_u = unlabeled.len();
    let per_batch_l = config.labeled_per_batch.min(n_l);
    if n_u > 0 && config.batch_size <= per_batch_l {
        return Err(Error::Config(format!(
            "batch_size {} leaves no room for unlabeled samples next to {} labeled",
            config.batch_size, per_batch_l
        )));
    }

    let mut batch_rng = rng::stream(config.seed, Stream::Batches);
    let mut dropout = rng::stream(config.seed, Stream::FinetuneDropout);
    let mut pair_rng = rng::stream(config.seed, Stream::Pairs);
    let mut report = TrainReport::default();
    let mut u_order: Vec<usize> = (0..n_u).collect();
    let mut l_order: Vec<usize> = (0..n_l).collect();

    for epoch in 0..config.finetune_epochs {
        let lambda = lambda_schedule(epoch, config.t1, config.t2)?;
        if config.count_reset == CountReset::Epoch {
            state.reset_counts();
        }
        // (labeled rows, unlabeled rows) per batch
        let plan: Vec<(Vec<usize>, Vec<usize>)> = if n_u > 0 {
            u_order.shuffle(&mut batch_rng);
            u_order
                .chunks(config.batch_size - per_batch_l)
                .map(|u| {
                    let mut l = index::sample(&mut batch_rng, n_l, per_batch_l).into_vec();
                    l.sort_unstable();
                    (l, u.to_vec())
                })
                .collect()
        } else {
            l_order.shuffle(&mut batch_rng);
            l_order.chunks(config.batch_size).map(|l| (l.to_vec(), Vec::new())).collect()
        };

        let mut sum = LossComponents::default();
        for (b, (l_idx, u_idx)) in plan.iter().enumerate() {
            if config.count_reset == CountReset::Batch {
                state.reset_counts();
            }
            let x_l = labeled.samples().select_rows(l_idx);
            let x_u = unlabeled.samples().select_rows(u_idx);
            let x = x_l.vstack(&x_u)?;
            let rows_l = l_idx.len();
            let batch_labels: Vec<usize> = l_idx.iter().map(|&i| labels[i]).collect();

            // (1) encode / decode
            let (z, enc) = params.encode(&x, config.finetune_dropout.then_some(&mut dropout as &mut dyn RngCore))?;
            let (recon, dec) = params.decode(&z, config.finetune_dropout.then_some(&mut dropout as &mut dyn RngCore))?;

            // (2) assignments
            let mut assignments = Vec::with_capacity(x.rows());
            for &c in &batch_labels {
                assignments.push(assign_labeled(c, k)?);
            }
            for row in z.iter_rows().skip(rows_l) {
                assignments.push(state.assign_unlabeled(row)?);
            }

            // (3) probabilities
            let mut probs = Matrix::zeros(x.rows(), k);
            for (i, row) in z.iter_rows().enumerate() {
                probs.row_mut(i).copy_from_slice(&state.assignment_probabilities(row)?);
            }

            // (4) pairs within each pool, capped
            let pairs_l = sample_pairs(
                &pairs_from_labels(&batch_labels),
                config.max_similar_pairs,
                config.max_dissimilar_pairs,
                &mut pair_rng,
            );
            let pairs_u = sample_pairs(
                &pairs_from_predictions(&assignments[rows_l..]),
                config.max_similar_pairs,
                config.max_dissimilar_pairs,
                &mut pair_rng,
            );

            // (5) losses and gradients
            let l_rows: Vec<usize> = (0..rows_l).collect();
            let u_rows: Vec<usize> = (rows_l..x.rows()).collect();
            let (pair_l, g_pl) = pairwise_loss(&probs.select_rows(&l_rows), &pairs_l, config.margin)?;
            let (pair_u, g_pu) = pairwise_loss(&probs.select_rows(&u_rows), &pairs_u, config.margin)?;
            let (clus_l, g_zl, _) = cluster_loss(&z.select_rows(&l_rows), &state, &assignments[..rows_l])?;
            let (clus_u, g_zu, _) = cluster_loss(&z.select_rows(&u_rows), &state, &assignments[rows_l..])?;
            let (rec, g_out) = reconstruction_loss(&recon, &x, config.reconstruction)?;
            let components = LossComponents {
                pair_labeled: pair_l,
                cluster_labeled: clus_l,
                pair_unlabeled: pair_u,
                cluster_unlabeled: clus_u,
                reconstruction: rec,
            };
            if !components.is_finite() {
                return Err(diverged(Phase::Finetune, epoch, b));
            }
            let mut g_z = Matrix::zeros(z.rows(), z.cols());
            for i in 0..z.rows() {
                let (weight, local, g_p, g_c) = if i < rows_l {
                    (1.0, i, &g_pl, &g_zl)
                } else {
                    (lambda, i - rows_l, &g_pu, &g_zu)
                };
                let through_probs = state.probabilities_backward(z.row(i), probs.row(i), g_p.row(local));
                for ((g, &a), &c) in g_z.row_mut(i).iter_mut().zip(&through_probs).zip(g_c.row(local)) {
                    *g = weight * (a + c);
                }
            }

            // (6) center updates from this batch's latents
            for (i, a) in assignments.iter().enumerate().skip(rows_l) {
                state.update_center_unlabeled(z.row(i), a)?;
                if config.record_center_updates {
                    report.center_updates.push(CenterUpdate { epoch, batch: b, cluster: a.cluster, class: None });
                }
            }
            for (i, &c) in batch_labels.iter().enumerate() {
                state.update_center_labeled(z.row(i), c)?;
                if config.record_center_updates {
                    report.center_updates.push(CenterUpdate { epoch, batch: b, cluster: c, class: Some(c) });
                }
            }

            // (7) network step
            let grads = params.backward(&enc, &dec, &g_out, Some(&g_z))?;
            params
                .adam_step(&grads, config.learning_rate, config.adam_betas)
                .map_err(|_| diverged(Phase::Finetune, epoch, b))?;
            sum = sum.add(components);
        }

        let batches = plan.len();
        let mean = if batches > 0 { sum.scaled(1.0 / batches as f64) } else { sum };
        let scores = match unlabeled.labels() {
            Some(truth) if n_u > 0 => Some(score(truth, &predict(params, &state, unlabeled.samples())?)?),
            _ => None,
        };
        let record = EpochRecord {
            phase: Phase::Finetune,
            epoch,
            batches,
            loss: total_loss(mean, lambda)?,
            scores,
        };
        observer(&record);
        report.epochs.push(record);
    }
    report.final_state = Some(state.clone());
    Ok((state, report))
}
