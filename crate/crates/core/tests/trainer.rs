use clusternet_core::data::{make_blobs, split, Dataset, SplitDataset};
use clusternet_core::losses::lambda_schedule;
use clusternet_core::network::{NetworkParameters, NetworkSpec};
use clusternet_core::trainer::{predict, pretrain, train_clusternet, TrainConfig};
use clusternet_core::Error;

fn blobs(per_cluster: usize, seed: u64) -> Dataset {
    let mut d = make_blobs(4, per_cluster, 2, 0.3, seed).unwrap();
    d.normalize_min_max();
    d
}

fn small_spec() -> NetworkSpec {
    NetworkSpec::dense(2, &[16], 4)
}

fn quick_config(pretrain_epochs: usize, finetune_epochs: usize) -> TrainConfig {
    TrainConfig {
        pretrain_epochs,
        finetune_epochs,
        learning_rate: 1e-3,
        batch_size: 64,
        labeled_per_batch: 16,
        ..TrainConfig::default()
    }
}

fn snapshot(p: &NetworkParameters) -> Vec<Vec<f64>> {
    p.tensors().map(<[f64]>::to_vec).collect()
}

#[test]
fn zero_pretrain_epochs_leave_parameters_unchanged() {
    let data = blobs(20, 0);
    let mut p = NetworkParameters::init(&small_spec(), 1).unwrap();
    let before = snapshot(&p);
    let report = pretrain(&mut p, &data, &quick_config(0, 0)).unwrap();
    assert!(report.epochs.is_empty());
    assert_eq!(snapshot(&p), before);
    assert_eq!(p.adam.step, 0);
}

#[test]
fn pretraining_halves_reconstruction_loss_on_blobs() {
    let data = blobs(200, 3);
    let mut p = NetworkParameters::init(&NetworkSpec::mlp(2), 3).unwrap();
    let cfg = TrainConfig { pretrain_epochs: 50, seed: 3, ..TrainConfig::default() };
    let report = pretrain(&mut p, &data, &cfg).unwrap();
    assert_eq!(report.epochs.len(), 50);
    let first = report.epochs[0].loss.reconstruction;
    let last = report.epochs[49].loss.reconstruction;
    assert!(last <= 0.5 * first, "first {first}, last {last}");
}

#[test]
fn training_is_deterministic_per_seed() {
    let data = blobs(40, 5);
    let s = split(&data, 0.1, 0.1, 5).unwrap();
    let cfg = TrainConfig { seed: 11, ..quick_config(3, 8) };
    let run = || {
        let mut p = NetworkParameters::init(&small_spec(), 11).unwrap();
        let pre = pretrain(&mut p, &s.train_pool().unwrap(), &cfg).unwrap();
        let (state, report) = train_clusternet(&mut p, &s, &cfg).unwrap();
        (pre, state, report, snapshot(&p))
    };
    assert_eq!(run(), run());
}

#[test]
fn lambda_trace_follows_the_schedule_and_gates_unlabeled_terms() {
    let data = blobs(15, 2);
    let s = split(&data, 0.2, 0.0, 2).unwrap();
    let cfg = quick_config(0, 60);
    let mut p = NetworkParameters::init(&small_spec(), 2).unwrap();
    let (_, report) = train_clusternet(&mut p, &s, &cfg).unwrap();
    let lambdas = report.lambdas();
    assert_eq!(lambdas.len(), 60);
    for (t, &l) in lambdas.iter().enumerate() {
        assert_eq!(l, lambda_schedule(t, 5, 40).unwrap());
    }
    assert!(lambdas[..5].iter().all(|&l| l == 0.0));
    assert!(lambdas[40..].iter().all(|&l| l == 1.0));
    for e in &report.epochs[..5] {
        let l = e.loss;
        assert_eq!(l.total, l.pair_labeled + l.cluster_labeled + l.reconstruction);
    }
}

#[test]
fn labeled_only_training_keeps_points_at_their_class_center() {
    let data = blobs(25, 4);
    let s = split(&data, 1.0, 0.0, 4).unwrap();
    assert!(s.unlabeled.is_empty());
    let cfg = quick_config(5, 20);
    let mut p = NetworkParameters::init(&small_spec(), 4).unwrap();
    pretrain(&mut p, &s.train_pool().unwrap(), &cfg).unwrap();
    let (state, report) = train_clusternet(&mut p, &s, &cfg).unwrap();
    assert!(report.epochs.iter().all(|e| e.scores.is_none()));
    let pred = predict(&p, &state, s.labeled.samples()).unwrap();
    assert_eq!(pred, s.labeled.labels().unwrap());
}

#[test]
fn labeled_center_updates_stay_within_their_class() {
    let data = blobs(30, 6);
    let s = split(&data, 0.1, 0.1, 6).unwrap();
    let cfg = TrainConfig { record_center_updates: true, ..quick_config(2, 6) };
    let mut p = NetworkParameters::init(&small_spec(), 6).unwrap();
    let (_, report) = train_clusternet(&mut p, &s, &cfg).unwrap();
    let labeled: Vec<_> = report.center_updates.iter().filter(|u| u.class.is_some()).collect();
    assert!(!labeled.is_empty());
    assert!(labeled.iter().all(|u| u.class == Some(u.cluster)));
    let unlabeled = report.center_updates.len() - labeled.len();
    assert_eq!(unlabeled, 6 * s.unlabeled.len());
}

#[test]
fn trained_model_recovers_blob_membership() {
    let data = blobs(200, 0);
    let s = split(&data, 0.02, 0.1, 0).unwrap();
    let cfg = TrainConfig::default();
    let mut p = NetworkParameters::init(&NetworkSpec::mlp(2), 0).unwrap();
    pretrain(&mut p, &s.train_pool().unwrap(), &cfg).unwrap();
    let (state, report) = train_clusternet(&mut p, &s, &cfg).unwrap();
    let labeled_pred = predict(&p, &state, s.labeled.samples()).unwrap();
    assert_eq!(labeled_pred, s.labeled.labels().unwrap());
    assert_eq!(predict(&p, &state, s.holdout.samples()).unwrap(), predict(&p, &state, s.holdout.samples()).unwrap());
    let nmi: Vec<f64> = report.epochs.iter().map(|e| e.scores.unwrap().nmi).collect();
    assert!(*nmi.last().unwrap() >= 0.95, "{nmi:?}");
    for w in nmi[nmi.len() - 10..].windows(2) {
        assert!(w[1] >= w[0] - 0.02, "{nmi:?}");
    }
}

#[test]
fn non_finite_loss_aborts_with_context() {
    let data = blobs(10, 1);
    let mut p = NetworkParameters::init(&small_spec(), 1).unwrap();
    p.tensors_mut().next().unwrap()[0] = f64::NAN;
    let err = pretrain(&mut p, &data, &quick_config(2, 0)).unwrap_err();
    assert_eq!(err, Error::Diverged { phase: "pretrain", epoch: 0, batch: 0 });
}

#[test]
fn missing_labeled_class_is_an_init_error() {
    let data = blobs(10, 1);
    let s = split(&data, 0.2, 0.0, 1).unwrap();
    let keep: Vec<usize> = (0..s.labeled.len()).filter(|&i| s.labeled.labels().unwrap()[i] != 2).collect();
    let broken = SplitDataset { labeled: s.labeled.subset(&keep), ..s };
    let mut p = NetworkParameters::init(&small_spec(), 1).unwrap();
    let err = train_clusternet(&mut p, &broken, &quick_config(0, 1)).unwrap_err();
    assert_eq!(err, Error::EmptyClass { class: 2 });
}

#[test]
fn batch_without_room_for_unlabeled_is_rejected() {
    let data = blobs(30, 1);
    let s = split(&data, 0.5, 0.0, 1).unwrap();
    let cfg = TrainConfig { batch_size: 16, labeled_per_batch: 16, ..quick_config(0, 1) };
    let mut p = NetworkParameters::init(&small_spec(), 1).unwrap();
    assert!(matches!(train_clusternet(&mut p, &s, &cfg), Err(Error::Config(_))));
}

#[test]
fn finetune_dropout_changes_the_trajectory_only_when_enabled() {
    let data = blobs(20, 7);
    let s = split(&data, 0.2, 0.0, 7).unwrap();
    let run = |finetune_dropout: bool| {
        let cfg = TrainConfig { finetune_dropout, ..quick_config(0, 3) };
        let mut p = NetworkParameters::init(&small_spec(), 7).unwrap();
        let (state, _) = train_clusternet(&mut p, &s, &cfg).unwrap();
        (snapshot(&p), state)
    };
    assert_eq!(run(false), run(false));
    assert_eq!(run(true), run(true));
    assert_ne!(run(false).0, run(true).0);
}
