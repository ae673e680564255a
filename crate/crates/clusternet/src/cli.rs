//! Command-line interface.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use clusternet_core::clustering::{constrained_kmeans, kmeans};
use clusternet_core::data::{Dataset, SplitDataset};
use clusternet_core::losses::Reduction;
use clusternet_core::metrics::{score, Scores};
use clusternet_core::network::NetworkParameters;
use clusternet_core::trainer::{self, CountReset, EpochRecord};
use clusternet_core::Matrix;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::{Architecture, DataSource, RunConfig};
use crate::error::{Error, Result};
use crate::log::{MetricsLog, Record};
use crate::table::{self, CsvOptions, LabelColumn};

pub const CONFIG_FILE: &str = "config.json";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const PRETRAINED_FILE: &str = "pretrained.ckpt";
pub const MODEL_FILE: &str = "model.ckpt";
pub const CENTERS_FILE: &str = "centers.csv";
pub const REPORT_FILE: &str = "report.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Parser)]
#[command(name = "clusternet", version, about = "Semi-supervised clustering with an autoencoder")]
pub struct Cli {
    /// Suppress per-epoch progress on stderr.
    #[arg(short, long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the autoencoder on reconstruction alone.
    Pretrain(RunArgs),
    /// Fine-tune with the clustering losses, starting from a pretrained
    /// checkpoint or pretraining first.
    Train(TrainArgs),
    /// Score a trained run on one of its splits.
    Eval(EvalArgs),
    /// k-means and constrained k-means on raw features or embeddings.
    Baseline(BaselineArgs),
    /// Write latent vectors (and predictions, when centers exist) as CSV.
    ExportEmbeddings(ExportArgs),
    /// Generate a Gaussian blobs dataset as CSV.
    MakeBlobs(BlobArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelCol {
    Last,
    First,
    None,
}

#[derive(Debug, Clone, Default, Args)]
pub struct DataArgs {
    /// JSON run configuration; flags below override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory containing an MNIST-style IDX image/label pair.
    #[arg(long, conflicts_with_all = ["images", "csv", "blobs"])]
    pub data_dir: Option<PathBuf>,
    /// IDX image file (magic 0x803).
    #[arg(long, requires = "labels", conflicts_with_all = ["csv", "blobs"])]
    pub images: Option<PathBuf>,
    /// IDX label file (magic 0x801).
    #[arg(long, requires = "images")]
    pub labels: Option<PathBuf>,
    /// Numeric CSV, one sample per row.
    #[arg(long, conflicts_with = "blobs")]
    pub csv: Option<PathBuf>,
    /// Skip the first CSV row.
    #[arg(long, requires = "csv")]
    pub csv_header: bool,
    /// Which CSV column holds integer labels [default: last].
    #[arg(long, value_enum, requires = "csv")]
    pub label_column: Option<LabelCol>,
    /// Synthetic Gaussian blobs.
    #[arg(long, value_name = "K,PER_CLUSTER,DIM,SPREAD,SEED")]
    pub blobs: Option<String>,
    /// Stratified subset of this many samples.
    #[arg(long)]
    pub subset: Option<usize>,
    /// Zero-pad images to 32x32.
    #[arg(long)]
    pub pad32: bool,
    /// Min-max scale every feature to [0, 1] (default for CSV and blobs).
    #[arg(long, overrides_with = "no_normalize")]
    pub normalize: bool,
    /// Leave features as loaded (default for IDX).
    #[arg(long)]
    pub no_normalize: bool,
    /// Fraction of each class given labels [default: 0.02].
    #[arg(long)]
    pub labeled_frac: Option<f64>,
    /// Fraction of each class held out for evaluation [default: 0.1].
    #[arg(long)]
    pub holdout_frac: Option<f64>,
    /// Seed for the labeled/unlabeled/holdout split [default: 0].
    #[arg(long)]
    pub split_seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ModelArgs {
    /// Encoder family [default: mlp].
    #[arg(long, value_enum)]
    pub arch: Option<Architecture>,
    /// Comma-separated hidden widths for the MLP.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Latent dimension [default: 32].
    #[arg(long)]
    pub latent_dim: Option<usize>,
    /// Autoencoder pretraining epochs [default: 100].
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    /// Fine-tuning epochs [default: 60].
    #[arg(long)]
    pub finetune_epochs: Option<usize>,
    /// Adam learning rate for both phases [default: 1e-4].
    #[arg(long)]
    pub lr: Option<f64>,
    /// Samples per batch [default: 256].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Labeled samples in each fine-tuning batch [default: 64].
    #[arg(long)]
    pub labeled_per_batch: Option<usize>,
    /// Epoch where the unlabeled weight starts rising [default: 5].
    #[arg(long)]
    pub t1: Option<usize>,
    /// Epoch where the unlabeled weight reaches 1 [default: 40].
    #[arg(long)]
    pub t2: Option<usize>,
    /// Hinge margin for dissimilar pairs [default: 2].
    #[arg(long)]
    pub margin: Option<f64>,
    /// Cap on similar and on dissimilar pairs per batch and pool [default: 256].
    #[arg(long)]
    pub max_pairs: Option<usize>,
    /// Reset center update counts every batch instead of every epoch.
    #[arg(long)]
    pub reset_counts_per_batch: bool,
    /// Sum the reconstruction error over the batch instead of averaging.
    #[arg(long)]
    pub recon_sum: bool,
    /// Keep dropout active while fine-tuning.
    #[arg(long)]
    pub finetune_dropout: bool,
    /// Seed for initialization, shuffling, dropout and pair sampling [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Pretrained checkpoint; without it the autoencoder is pretrained first.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Independent runs over consecutive split and training seeds.
    #[arg(long, default_value_t = 1)]
    pub repeats: usize,
    /// Log every center update to the report.
    #[arg(long)]
    pub record_center_updates: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitName {
    Holdout,
    Unlabeled,
    Labeled,
    Train,
}

impl SplitName {
    fn as_str(self) -> &'static str {
        match self {
            SplitName::Holdout => "holdout",
            SplitName::Unlabeled => "unlabeled",
            SplitName::Labeled => "labeled",
            SplitName::Train => "train",
        }
    }

    fn select(self, split: &SplitDataset) -> Result<Dataset> {
        Ok(match self {
            SplitName::Holdout => split.holdout.clone(),
            SplitName::Unlabeled => split.unlabeled.clone(),
            SplitName::Labeled => split.labeled.clone(),
            SplitName::Train => split.train_pool()?,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Output directory of a `train` run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value = "holdout")]
    pub on: SplitName,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Cluster embeddings from this checkpoint instead of raw features.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub restarts: usize,
    #[arg(long, default_value_t = 300)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also append the results to this metrics log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Output directory of a `pretrain` or `train` run.
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long, value_enum, default_value = "train")]
    pub on: SplitName,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BlobArgs {
    #[arg(long, default_value_t = 4)]
    pub k: usize,
    #[arg(long, default_value_t = 200)]
    pub per_cluster: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 0.3)]
    pub spread: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

impl DataArgs {
    pub fn resolve(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => base,
        };
        let d = &mut cfg.data;
        if let Some(dir) = &self.data_dir {
            d.source = DataSource::IdxDir { dir: dir.clone() };
        }
        if let (Some(images), Some(labels)) = (&self.images, &self.labels) {
            d.source = DataSource::Idx { images: images.clone(), labels: labels.clone() };
        }
        if let Some(path) = &self.csv {
            let label_column = match self.label_column.unwrap_or(LabelCol::Last) {
                LabelCol::Last => LabelColumn::Last,
                LabelCol::First => LabelColumn::First,
                LabelCol::None => LabelColumn::None,
            };
            d.source = DataSource::Csv {
                path: path.clone(),
                options: CsvOptions { has_header: self.csv_header, label_column },
            };
        }
        if let Some(spec) = &self.blobs {
            d.source = parse_blobs(spec)?;
        }
        if self.subset.is_some() {
            d.subset = self.subset;
        }
        if self.pad32 {
            d.pad_to = Some((32, 32));
        }
        if self.normalize {
            d.normalize = Some(true);
        }
        if self.no_normalize {
            d.normalize = Some(false);
        }
        let s = &mut cfg.split;
        if let Some(v) = self.labeled_frac {
            s.labeled_frac = v;
        }
        if let Some(v) = self.holdout_frac {
            s.holdout_frac = v;
        }
        if let Some(v) = self.split_seed {
            s.seed = v;
        }
        Ok(cfg)
    }
}

fn parse_blobs(spec: &str) -> Result<DataSource> {
    let usage = || Error::Usage(format!("--blobs expects K,PER_CLUSTER,DIM,SPREAD,SEED, got {spec:?}"));
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [k, per, dim, spread, seed] = parts[..] else {
        return Err(usage());
    };
    Ok(DataSource::Blobs {
        k: k.parse().map_err(|_| usage())?,
        per_cluster: per.parse().map_err(|_| usage())?,
        dim: dim.parse().map_err(|_| usage())?,
        spread: spread.parse().map_err(|_| usage())?,
        seed: seed.parse().map_err(|_| usage())?,
    })
}

impl ModelArgs {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let n = &mut cfg.network;
        if let Some(a) = self.arch {
            n.architecture = a;
        }
        if self.hidden.is_some() {
            n.hidden = self.hidden.clone();
        }
        if self.latent_dim.is_some() {
            n.latent_dim = self.latent_dim;
        }
        let t = &mut cfg.train;
        macro_rules! set {
            ($($flag:ident => $field:ident),*) => {$(
                if let Some(v) = self.$flag {
                    t.$field = v;
                }
            )*};
        }
        set!(pretrain_epochs => pretrain_epochs, finetune_epochs => finetune_epochs, lr => learning_rate,
             batch_size => batch_size, labeled_per_batch => labeled_per_batch, t1 => t1, t2 => t2,
             margin => margin, max_pairs => max_similar_pairs, max_pairs => max_dissimilar_pairs, seed => seed);
        if self.reset_counts_per_batch {
            t.count_reset = CountReset::Batch;
        }
        if self.recon_sum {
            t.reconstruction = Reduction::Sum;
        }
        if self.finetune_dropout {
            t.finetune_dropout = true;
        }
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = self.data.resolve(RunConfig::default())?;
        self.model.apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string(value)?);
    Ok(())
}

struct Progress {
    quiet: bool,
}

impl Progress {
    fn epoch(&self, r: &EpochRecord) {
        if self.quiet {
            return;
        }
        let scores = r.scores.map(|s| format!(" nmi {:.4} acc {:.2}", s.nmi, s.acc_matched)).unwrap_or_default();
        eprintln!(
            "{:?} epoch {:>3} lambda {:.3} loss {:.5}{}",
            r.phase, r.epoch, r.loss.lambda, r.loss.total, scores
        );
    }

    fn warn(&self, msg: &str) {
        eprintln!("warning: {msg}");
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let progress = Progress { quiet: cli.quiet };
    match cli.command {
        Command::Pretrain(args) => cmd_pretrain(&args, &progress),
        Command::Train(args) => cmd_train(&args, &progress),
        Command::Eval(args) => cmd_eval(&args),
        Command::Baseline(args) => cmd_baseline(&args),
        Command::ExportEmbeddings(args) => cmd_export(&args),
        Command::MakeBlobs(args) => cmd_make_blobs(&args),
    }
}

fn pretrain_into(
    cfg: &RunConfig,
    split: &SplitDataset,
    log: &mut MetricsLog,
    progress: &Progress,
) -> Result<NetworkParameters> {
    let spec = cfg.network.spec_for(&split.labeled)?;
    let mut params = NetworkParameters::init(&spec, cfg.train.seed)?;
    let pool = split.train_pool()?;
    let mut failure = None;
    trainer::pretrain_with_observer(&mut params, &pool, &cfg.train, &mut |r| {
        progress.epoch(r);
        if failure.is_none() {
            failure = log.write(&Record::epoch(r)).err();
        }
    })?;
    failure.map_or(Ok(params), Err)
}

fn cmd_pretrain(args: &RunArgs, progress: &Progress) -> Result<()> {
    let cfg = args.resolve()?;
    create_dir(&args.out)?;
    cfg.save(args.out.join(CONFIG_FILE))?;
    let data = cfg.load_dataset()?;
    let split = cfg.split(&data)?;
    let mut log = MetricsLog::create(args.out.join(METRICS_FILE))?;
    let params = pretrain_into(&cfg, &split, &mut log, progress)?;
    Checkpoint { params, state: None }.save(args.out.join(PRETRAINED_FILE))
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    split_seed: u64,
    train_seed: u64,
    unlabeled: Option<Scores>,
    holdout: Option<Scores>,
}

fn scores_on(params: &NetworkParameters, ckpt_state: &clusternet_core::clustering::ClusterState, data: &Dataset) -> Result<Option<Scores>> {
    match data.labels() {
        Some(truth) if !data.is_empty() => {
            let pred = trainer::predict(params, ckpt_state, data.samples())?;
            Ok(Some(score(truth, &pred)?))
        }
        _ => Ok(None),
    }
}

fn train_once(cfg: &RunConfig, out: &Path, checkpoint: Option<&Checkpoint>, progress: &Progress) -> Result<RunSummary> {
    create_dir(out)?;
    cfg.save(out.join(CONFIG_FILE))?;
    for w in cfg.train.warnings() {
        progress.warn(&w);
    }
    let data = cfg.load_dataset()?;
    let split = cfg.split(&data)?;
    let mut log = MetricsLog::create(out.join(METRICS_FILE))?;
    let mut params = match checkpoint {
        Some(ckpt) => {
            let expected = cfg.network.spec_for(&data)?;
            if ckpt.params.spec() != &expected {
                return Err(Error::Usage("checkpoint network does not match the configured architecture".into()));
            }
            ckpt.params.clone()
        }
        None => pretrain_into(cfg, &split, &mut log, progress)?,
    };
    let mut failure = None;
    let (state, report) = trainer::train_clusternet_with_observer(&mut params, &split, &cfg.train, &mut |r| {
        progress.epoch(r);
        if failure.is_none() {
            failure = log.write(&Record::epoch(r)).err();
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    let holdout = scores_on(&params, &state, &split.holdout)?;
    if let Some(scores) = holdout {
        log.write(&Record::Eval { split: "holdout", scores })?;
    }
    table::write_rows(out.join(CENTERS_FILE), "z", state.centers(), &[])?;
    write_json(&out.join(REPORT_FILE), &report)?;
    let unlabeled = report.epochs.last().and_then(|e| e.scores);
    Checkpoint { params, state: Some(state) }.save(out.join(MODEL_FILE))?;
    Ok(RunSummary { split_seed: cfg.split.seed, train_seed: cfg.train.seed, unlabeled, holdout })
}

#[derive(Debug, Serialize)]
struct Aggregate {
    runs: Vec<RunSummary>,
    mean_unlabeled_nmi: Option<f64>,
    best_unlabeled_nmi: Option<f64>,
    mean_holdout_nmi: Option<f64>,
    best_holdout_nmi: Option<f64>,
}

fn mean_best(values: Vec<f64>) -> (Option<f64>, Option<f64>) {
    if values.is_empty() {
        return (None, None);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    (Some(mean), values.into_iter().reduce(f64::max))
}

fn cmd_train(args: &TrainArgs, progress: &Progress) -> Result<()> {
    let mut cfg = args.run.resolve()?;
    cfg.train.record_center_updates |= args.record_center_updates;
    if args.repeats == 0 {
        return Err(Error::Usage("--repeats must be at least 1".into()));
    }
    let checkpoint = args.checkpoint.as_ref().map(Checkpoint::load).transpose()?;
    if args.repeats == 1 {
        let summary = train_once(&cfg, &args.run.out, checkpoint.as_ref(), progress)?;
        return print_json(&summary);
    }
    create_dir(&args.run.out)?;
    let mut runs = Vec::new();
    for i in 0..args.repeats {
        let mut c = cfg.clone();
        c.split.seed += i as u64;
        c.train.seed += i as u64;
        let summary = train_once(&c, &args.run.out.join(format!("run-{i}")), checkpoint.as_ref(), progress)?;
        print_json(&summary)?;
        runs.push(summary);
    }
    let (mean_u, best_u) = mean_best(runs.iter().filter_map(|r| r.unlabeled.map(|s| s.nmi)).collect());
    let (mean_h, best_h) = mean_best(runs.iter().filter_map(|r| r.holdout.map(|s| s.nmi)).collect());
    let agg = Aggregate {
        runs,
        mean_unlabeled_nmi: mean_u,
        best_unlabeled_nmi: best_u,
        mean_holdout_nmi: mean_h,
        best_holdout_nmi: best_h,
    };
    write_json(&args.run.out.join(SUMMARY_FILE), &agg)
}

fn load_run(dir: &Path, file: &str) -> Result<(RunConfig, SplitDataset, Checkpoint)> {
    let cfg = RunConfig::load(dir.join(CONFIG_FILE))?;
    let data = cfg.load_dataset()?;
    let split = cfg.split(&data)?;
    let ckpt = Checkpoint::load(dir.join(file))?;
    Ok((cfg, split, ckpt))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (_, split, ckpt) = load_run(&args.run, MODEL_FILE)?;
    let state = ckpt
        .state
        .as_ref()
        .ok_or_else(|| Error::Usage(format!("{} has no cluster centers", args.run.join(MODEL_FILE).display())))?;
    let data = args.on.select(&split)?;
    let scores = scores_on(&ckpt.params, state, &data)?
        .ok_or_else(|| Error::Usage(format!("the {} split is empty or unlabeled", args.on.as_str())))?;
    let record = Record::Eval { split: args.on.as_str(), scores };
    write_json(&args.run.join(format!("eval-{}.json", args.on.as_str())), &record)?;
    print_json(&record)
}

fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    let cfg = args.data.resolve(RunConfig::default())?;
    cfg.validate()?;
    let data = cfg.load_dataset()?;
    let split = cfg.split(&data)?;
    let ckpt_params: Option<NetworkParameters> =
        args.checkpoint.as_ref().map(|p| Checkpoint::load(p).map(|c| c.params)).transpose()?;
    let features = |m: &Matrix| -> Result<Matrix> {
        match &ckpt_params {
            Some(p) => Ok(p.embed(m)?),
            None => Ok(m.clone()),
        }
    };
    let truth = split
        .unlabeled
        .labels()
        .ok_or_else(|| Error::Usage("baselines need labeled data for scoring".into()))?;
    let labels = split.labeled.labels().expect("split keeps labels");
    let unlabeled = features(split.unlabeled.samples())?;
    let labeled = features(split.labeled.samples())?;
    let space = if ckpt_params.is_some() { "embedding" } else { "raw" };
    let km = kmeans(&unlabeled, split.num_classes, args.restarts, args.max_iter, args.seed)?;
    let ckm = constrained_kmeans(&unlabeled, &labeled, labels, split.num_classes, args.max_iter)?;
    let mut log = args.log.as_ref().map(MetricsLog::append).transpose()?;
    for (method, pred) in [("kmeans", &km.assignments), ("constrained_kmeans", &ckm.assignments)] {
        let method = format!("{method}_{space}");
        let record = Record::Baseline { method: &method, split: "unlabeled", scores: score(truth, pred)? };
        if let Some(log) = log.as_mut() {
            log.write(&record)?;
        }
        print_json(&record)?;
    }
    Ok(())
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let file = if args.run.join(MODEL_FILE).is_file() { MODEL_FILE } else { PRETRAINED_FILE };
    let (_, split, ckpt) = load_run(&args.run, file)?;
    let data = args.on.select(&split)?;
    let z = ckpt.params.embed(data.samples())?;
    let predictions = match &ckpt.state {
        Some(s) => Some(trainer::predict(&ckpt.params, s, data.samples())?),
        None => None,
    };
    let mut extra: Vec<(&str, &[usize])> = Vec::new();
    if let Some(l) = data.labels() {
        extra.push(("label", l));
    }
    if let Some(p) = &predictions {
        extra.push(("cluster", p));
    }
    table::write_rows(&args.out, "z", &z, &extra)
}

fn cmd_make_blobs(args: &BlobArgs) -> Result<()> {
    let data = clusternet_core::data::make_blobs(args.k, args.per_cluster, args.dim, args.spread, args.seed)?;
    table::write_dataset(&args.out, &data)
}
