//! Command-line pipeline: dataset -> adversarial training -> density
//! triplets -> regressor -> evaluation reports, plus the self-contained
//! verification suite.
//!
//! Stages communicate only through files (checkpoints, triplet files,
//! reports), so any stage can be re-run, audited, or replaced on its own.
//! Every run requires an explicit seed - there is deliberately no
//! wall-clock fallback - and writes its fully resolved configuration next
//! to its outputs before any long computation starts. A lock file guards
//! each output directory against concurrent writers.

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    class_composition, cross_dataset_report, evaluate_dataset, image_grid_dump, rank_extremes,
    summary_json, write_report_csv, DensityReport,
};
use crate::data::{
    holdout_filter, load_cifar_binary, load_dataset, load_mnist_idx, rescale, split_train_test,
    synth_mixture, Dataset, EmbeddingSpec, MixtureComponent, SyntheticMixtureSpec,
};
use crate::density::{
    partition_clean, sample_triplets, save_triplets, write_triplets_csv, DensityTriplet,
    DEFAULT_DEGENERACY_THRESHOLD,
};
use crate::error::{Error, Result};
use crate::latent::{latent_labels_from_triplets, train_latent_regressor};
use crate::models::{load_gan_set, save_gan_set, LatentPrior, Regressor};
use crate::net::{Activation, NetworkSpec};
use crate::train::{
    derive_seed, train_gan, train_regressor, GanArch, LossVariant, RegressorReport,
    TrainingConfig,
};
use crate::verify;
use crate::Tensor;

/// Seed-derivation tags for CLI-owned random streams. Training-internal
/// streams use tags below 20; these must stay disjoint.
const TAG_DATASET: u64 = 20;
const TAG_DATASET_B: u64 = 21;
const TAG_TRIPLETS: u64 = 22;
const TAG_SPLIT: u64 = 23;

const RESOLVED_CONFIG_FILE: &str = "resolved-config.toml";
const LOCK_FILE: &str = "ganpdf.lock";
const TRIPLET_FILE: &str = "triplets.gpt";
const REGRESSOR_FILE: &str = "regressor.net";

// ---------------------------------------------------------------------------
// Command line surface
// ---------------------------------------------------------------------------

#[derive(Debug, Parser)]
#[command(
    name = "ganpdf",
    version,
    about = "Explicit densities from trained generative maps"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a generator/discriminator pair (optionally with a Q head).
    TrainGan(CommonArgs),
    /// Sample (latent, image, log-density) triplets from a checkpoint.
    SampleDensities(CommonArgs),
    /// Fit a density regressor to a triplet file.
    TrainRegressor(CommonArgs),
    /// Score datasets with a trained regressor and write reports.
    Evaluate(CommonArgs),
    /// Run the numerical invariant suite on built-in toy generators.
    Verify(CommonArgs),
}

#[derive(Debug, Default, Args)]
pub struct CommonArgs {
    /// TOML configuration file; relative paths inside it resolve against
    /// its directory.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for this run's artifacts.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Regressor label mode; overrides `regressor.mode`.
    #[arg(long, value_enum)]
    pub mode: Option<RegressorMode>,
    /// Triplet count; overrides `sample.count`.
    #[arg(long)]
    pub count: Option<usize>,
    /// Worker thread count (default: all cores).
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Parse `std::env::args` and run. Returns the process exit code.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainGan(a) => cmd_train_gan(&Ctx::prepare(a, true)?),
        Command::SampleDensities(a) => cmd_sample_densities(&Ctx::prepare(a, true)?),
        Command::TrainRegressor(a) => cmd_train_regressor(&Ctx::prepare(a, true)?),
        Command::Evaluate(a) => cmd_evaluate(&Ctx::prepare(a, true)?),
        Command::Verify(a) => cmd_verify(&Ctx::prepare(a, false)?),
    }
}

// ---------------------------------------------------------------------------
// Configuration file model
// ---------------------------------------------------------------------------

/// Fully resolved run configuration. Parsed from TOML, merged with
/// command-line overrides, and written back out as provenance before any
/// long computation starts.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<DatasetConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gan: Option<GanConfig>,
    #[serde(default, skip_serializing_if = "is_default_sample")]
    pub sample: SampleConfig,
    #[serde(default, skip_serializing_if = "is_default_regressor")]
    pub regressor: RegressorConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evaluate: Option<EvaluateConfig>,
}

fn is_default_sample(s: &SampleConfig) -> bool {
    s == &SampleConfig::default()
}

fn is_default_regressor(r: &RegressorConfig) -> bool {
    r == &RegressorConfig::default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Mnist,
    Cifar,
    Cache,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    /// Synthetic: number of samples to draw.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// Synthetic: mixture components.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub component: Vec<ComponentConfig>,
    /// Synthetic: optional orthonormal embedding into a larger space.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embedding: Option<EmbeddingConfig>,
    /// IDX image file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub images: Option<PathBuf>,
    /// IDX label file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub labels: Option<PathBuf>,
    /// Binary batch files.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<PathBuf>,
    /// Cached dataset file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// Nearest-neighbor raster resize: [height, width, channels].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rescale: Option<[usize; 3]>,
    /// Labels to drop before use (hold-out experiments).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exclude_classes: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub mean: Vec<f64>,
    pub scale: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub target_dim: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossVariantConfig {
    Minimax,
    #[default]
    Nonsaturating,
}

impl From<LossVariantConfig> for LossVariant {
    fn from(v: LossVariantConfig) -> LossVariant {
        match v {
            LossVariantConfig::Minimax => LossVariant::Minimax,
            LossVariantConfig::Nonsaturating => LossVariant::NonSaturating,
        }
    }
}

fn default_gan_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_q_hidden() -> Vec<usize> {
    vec![16]
}

fn default_gan_lr() -> f64 {
    2e-4
}

fn default_epochs() -> usize {
    1
}

fn default_batch() -> usize {
    64
}

fn default_lambda() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub latent_dim: usize,
    #[serde(default = "default_gan_hidden")]
    pub g_hidden: Vec<usize>,
    #[serde(default = "default_gan_hidden")]
    pub d_hidden: Vec<usize>,
    /// Discriminator layer whose post-activation feeds the Q head;
    /// defaults to the last hidden layer.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub feature_layer: Option<usize>,
    #[serde(default)]
    pub with_q: bool,
    #[serde(default = "default_q_hidden")]
    pub q_hidden: Vec<usize>,
    #[serde(default = "default_gan_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lambda")]
    pub lambda_mi: f64,
    #[serde(default)]
    pub loss_variant: LossVariantConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SampleConfig {
    /// Checkpoint directory holding the trained model set.
    pub checkpoint: Option<PathBuf>,
    pub count: Option<usize>,
    /// Degeneracy threshold on the smallest |r_ii|.
    pub threshold: Option<f64>,
    /// Also write a human-readable CSV next to the binary triplet file.
    pub csv: bool,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig {
            checkpoint: None,
            count: None,
            threshold: None,
            csv: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorMode {
    /// Labels are each image's own log-density (the map's change of
    /// variables).
    Pixel,
    /// Labels are the generating latent's prior log-density.
    Latent,
}

impl RegressorMode {
    fn name(self) -> &'static str {
        match self {
            RegressorMode::Pixel => "pixel",
            RegressorMode::Latent => "latent",
        }
    }
}

fn default_reg_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_reg_lr() -> f64 {
    1e-2
}

fn default_reg_epochs() -> usize {
    100
}

fn default_eval_fraction() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressorConfig {
    /// Triplet file produced by `sample-densities`.
    pub triplets: Option<PathBuf>,
    pub hidden: Vec<usize>,
    pub mode: Option<RegressorMode>,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of clean triplets held out for the R^2 report.
    pub eval_fraction: f64,
}

impl Default for RegressorConfig {
    fn default() -> Self {
        RegressorConfig {
            triplets: None,
            hidden: default_reg_hidden(),
            mode: None,
            learning_rate: default_reg_lr(),
            epochs: default_reg_epochs(),
            batch_size: default_batch(),
            eval_fraction: default_eval_fraction(),
        }
    }
}

fn default_bin_count() -> usize {
    50
}

fn default_top_k() -> usize {
    100
}

fn default_grid_cols() -> usize {
    10
}

fn default_tag() -> String {
    "native".to_string()
}

fn default_tag_b() -> String {
    "foreign".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Regressor checkpoint to score with.
    pub regressor: PathBuf,
    /// Second dataset for cross-dataset mode.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_b: Option<DatasetConfig>,
    #[serde(default = "default_tag")]
    pub tag: String,
    #[serde(default = "default_tag_b")]
    pub tag_b: String,
    #[serde(default = "default_bin_count")]
    pub bin_count: usize,
    /// Extremes list length for rankings and class composition.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Single-dataset mode: carve off this many items as a "test" tag and
    /// report the train/test KS statistic.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_count: Option<usize>,
    /// Write top/bottom image mosaics (raster datasets only).
    #[serde(default)]
    pub mosaics: bool,
    #[serde(default = "default_grid_cols")]
    pub grid_cols: usize,
}

// ---------------------------------------------------------------------------
// Run context: config + overrides + provenance + locking
// ---------------------------------------------------------------------------

/// Exclusive claim on an output directory; the lock file is removed when
/// the context drops.
#[derive(Debug)]
struct DirLock {
    path: PathBuf,
}

impl DirLock {
    fn acquire(dir: &Path) -> Result<DirLock> {
        let path = dir.join(LOCK_FILE);
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(DirLock { path }),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => Err(Error::config(format!(
                "output directory {} is locked by another run (stale lock? remove {})",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug)]
struct Ctx {
    cfg: RunConfig,
    seed: u64,
    out: Option<PathBuf>,
    /// Directory that relative paths in the config resolve against.
    base: PathBuf,
    mode: Option<RegressorMode>,
    _lock: Option<DirLock>,
}

impl Ctx {
    fn prepare(args: CommonArgs, out_required: bool) -> Result<Ctx> {
        let (mut cfg, base) = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::config(format!("cannot read config {}: {e}", path.display()))
                })?;
                let cfg: RunConfig = toml::from_str(&text).map_err(|e| {
                    Error::config(format!("bad config {}: {e}", path.display()))
                })?;
                let base = path
                    .parent()
                    .filter(|p| !p.as_os_str().is_empty())
                    .map(Path::to_path_buf)
                    .unwrap_or_else(|| PathBuf::from("."));
                (cfg, base)
            }
            None => (RunConfig::default(), PathBuf::from(".")),
        };

        let seed = args.seed.or(cfg.seed).ok_or_else(|| {
            Error::config(
                "a seed is required (--seed or `seed` in the config); \
                 wall-clock defaults are deliberately unsupported",
            )
        })?;
        cfg.seed = Some(seed);

        if let Some(t) = args.threads.or(cfg.threads) {
            if t == 0 {
                return Err(Error::config("--threads must be >= 1"));
            }
            cfg.threads = Some(t);
            // A pool may already exist when several commands share one
            // process (tests); the explicit request still has to win, so
            // only an incompatible existing pool is an error.
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
                if rayon::current_num_threads() != t {
                    return Err(Error::config(format!("thread pool: {e}")));
                }
            }
        }

        if let Some(c) = args.count {
            cfg.sample.count = Some(c);
        }
        let mode = args.mode.or(cfg.regressor.mode);
        if let Some(m) = mode {
            cfg.regressor.mode = Some(m);
        }

        let out = args.out;
        if out_required && out.is_none() {
            return Err(Error::config("--out <dir> is required for this command"));
        }

        let lock = match &out {
            Some(dir) => {
                fs::create_dir_all(dir)?;
                let lock = DirLock::acquire(dir)?;
                let resolved = toml::to_string_pretty(&cfg)
                    .map_err(|e| Error::config(format!("cannot serialize config: {e}")))?;
                fs::write(dir.join(RESOLVED_CONFIG_FILE), resolved)?;
                Some(lock)
            }
            None => None,
        };

        Ok(Ctx {
            cfg,
            seed,
            out,
            base,
            mode,
            _lock: lock,
        })
    }

    fn out(&self) -> &Path {
        self.out.as_deref().expect("out checked during prepare")
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base.join(p)
        }
    }

    fn dataset(&self, which: &str) -> Result<&DatasetConfig> {
        self.cfg
            .dataset
            .as_ref()
            .ok_or_else(|| Error::config(format!("{which} needs a [dataset] section")))
    }
}

// ---------------------------------------------------------------------------
// Dataset resolution
// ---------------------------------------------------------------------------

fn resolve_dataset(ctx: &Ctx, dc: &DatasetConfig, seed_tag: u64) -> Result<Dataset> {
    let ds = match dc.kind {
        DatasetKind::Synthetic => {
            let count = dc
                .count
                .ok_or_else(|| Error::config("synthetic dataset needs `count`"))?;
            if dc.component.is_empty() {
                return Err(Error::config(
                    "synthetic dataset needs at least one [[dataset.component]]",
                ));
            }
            let spec = SyntheticMixtureSpec {
                components: dc
                    .component
                    .iter()
                    .map(|c| MixtureComponent {
                        mean: c.mean.clone(),
                        scale: c.scale,
                        weight: c.weight,
                    })
                    .collect(),
                embedding: dc.embedding.map(|e| EmbeddingSpec {
                    target_dim: e.target_dim,
                    seed: e.seed,
                }),
            };
            synth_mixture(&spec, count, derive_seed(ctx.seed, seed_tag))?
        }
        DatasetKind::Mnist => {
            let images = dc
                .images
                .as_ref()
                .ok_or_else(|| Error::config("idx dataset needs `images`"))?;
            let labels = dc
                .labels
                .as_ref()
                .ok_or_else(|| Error::config("idx dataset needs `labels`"))?;
            load_mnist_idx(&ctx.resolve(images), &ctx.resolve(labels))?
        }
        DatasetKind::Cifar => {
            if dc.paths.is_empty() {
                return Err(Error::config("cifar dataset needs `paths`"));
            }
            let resolved: Vec<PathBuf> = dc.paths.iter().map(|p| ctx.resolve(p)).collect();
            let refs: Vec<&Path> = resolved.iter().map(PathBuf::as_path).collect();
            load_cifar_binary(&refs)?
        }
        DatasetKind::Cache => {
            let path = dc
                .path
                .as_ref()
                .ok_or_else(|| Error::config("cache dataset needs `path`"))?;
            load_dataset(&ctx.resolve(path))?
        }
    };

    let ds = match dc.rescale {
        Some([h, w, c]) => rescale(&ds, h, w, c)?,
        None => ds,
    };

    if dc.exclude_classes.is_empty() {
        Ok(ds)
    } else {
        let excluded: BTreeSet<i64> = dc.exclude_classes.iter().copied().collect();
        let (kept, removed) = holdout_filter(&ds, &excluded)?;
        println!(
            "dataset: excluded {removed} items with classes {:?}",
            dc.exclude_classes
        );
        Ok(kept)
    }
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

fn cmd_train_gan(ctx: &Ctx) -> Result<()> {
    let gc = ctx
        .cfg
        .gan
        .as_ref()
        .ok_or_else(|| Error::config("train-gan needs a [gan] section"))?;
    let ds = resolve_dataset(ctx, ctx.dataset("train-gan")?, TAG_DATASET)?;
    let data = ds.to_tensor()?;
    println!(
        "training on {} items of dim {} ({})",
        ds.len(),
        ds.dim(),
        ds.provenance()
    );

    let generator = NetworkSpec::mlp(
        gc.latent_dim,
        &gc.g_hidden,
        Activation::Tanh,
        ds.dim(),
        Activation::Identity,
    )?;
    let discriminator = NetworkSpec::mlp(
        ds.dim(),
        &gc.d_hidden,
        Activation::LeakyRelu(0.2),
        1,
        Activation::Identity,
    )?;
    if gc.d_hidden.is_empty() {
        return Err(Error::config("discriminator needs at least one hidden layer"));
    }
    let feature_layer = gc.feature_layer.unwrap_or(gc.d_hidden.len() - 1);
    let qnet = if gc.with_q {
        let feature_dim = *gc.d_hidden.get(feature_layer).ok_or_else(|| {
            Error::config(format!(
                "feature_layer {feature_layer} is not a hidden layer (discriminator has {})",
                gc.d_hidden.len()
            ))
        })?;
        Some(NetworkSpec::mlp(
            feature_dim,
            &gc.q_hidden,
            Activation::Tanh,
            gc.latent_dim,
            Activation::Identity,
        )?)
    } else {
        None
    };
    let arch = GanArch {
        generator,
        discriminator,
        feature_layer,
        qnet,
    };

    let mut tcfg = TrainingConfig::gan_defaults(ctx.seed);
    tcfg.learning_rate = gc.learning_rate;
    tcfg.epochs = gc.epochs;
    tcfg.batch_size = gc.batch_size;
    tcfg.lambda_mi = gc.lambda_mi;
    tcfg.loss_variant = gc.loss_variant.into();

    let (set, report) = train_gan(&data, &arch, &tcfg, gc.with_q)?;

    save_gan_set(ctx.out(), &set)?;
    let losses = fs::File::create(ctx.out().join("losses.csv"))?;
    report.write_csv(losses)?;

    if let Some(step) = report.diverged_at {
        return Err(Error::numerical(format!(
            "training diverged at step {step}; last good checkpoint saved to {}",
            ctx.out().display()
        )));
    }
    if let Some(last) = report.records.last() {
        println!(
            "done: {} steps, d_loss {:.4}, g_loss {:.4}",
            report.records.len(),
            last.d_loss,
            last.g_loss
        );
    }
    println!("checkpoint written to {}", ctx.out().display());
    Ok(())
}

fn cmd_sample_densities(ctx: &Ctx) -> Result<()> {
    let sc = &ctx.cfg.sample;
    let checkpoint = sc
        .checkpoint
        .as_ref()
        .ok_or_else(|| Error::config("sample-densities needs `sample.checkpoint`"))?;
    let set = load_gan_set(&ctx.resolve(checkpoint))?;
    let count = sc.count.unwrap_or(50_000);
    let threshold = sc.threshold.unwrap_or(DEFAULT_DEGENERACY_THRESHOLD);

    let triplets = sample_triplets(
        &set.generator,
        count,
        derive_seed(ctx.seed, TAG_TRIPLETS),
        threshold,
    )?;

    let degenerate = triplets.iter().filter(|t| t.flag.rank_deficient).count();
    let min_rii = triplets
        .iter()
        .map(|t| t.flag.min_abs_rii)
        .fold(f64::INFINITY, f64::min);
    println!(
        "sampled {count} triplets (latent dim {} -> output dim {})",
        set.generator.latent_dim(),
        set.generator.output_dim()
    );
    println!(
        "degenerate: {degenerate} ({:.3}%), smallest |r_ii| {min_rii:.3e}, threshold {threshold:.3e}",
        100.0 * degenerate as f64 / count as f64
    );

    let path = ctx.out().join(TRIPLET_FILE);
    save_triplets(&path, &triplets, &set.generator, threshold)?;
    println!("wrote {}", path.display());
    if sc.csv {
        let csv = fs::File::create(ctx.out().join("triplets.csv"))?;
        write_triplets_csv(csv, &triplets)?;
    }
    Ok(())
}

/// Deterministic train/eval index split over the clean triplets.
fn split_indices(n: usize, eval_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&eval_fraction) {
        return Err(Error::config(format!(
            "eval_fraction must lie in [0, 1), got {eval_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::data(format!(
            "need at least 2 clean triplets to hold out an evaluation set, got {n}"
        )));
    }
    let eval_count = ((n as f64 * eval_fraction).round() as usize).clamp(1, n - 1);
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (eval_idx, train_idx) = idx.split_at(eval_count);
    Ok((train_idx.to_vec(), eval_idx.to_vec()))
}

fn triplet_inputs(triplets: &[DensityTriplet], idx: &[usize]) -> Result<Tensor> {
    let dim = triplets[idx[0]].x.len();
    let mut values = Vec::with_capacity(idx.len() * dim);
    for &i in idx {
        values.extend_from_slice(&triplets[i].x);
    }
    Tensor::new(vec![idx.len(), dim], values)
}

fn cmd_train_regressor(ctx: &Ctx) -> Result<()> {
    let rc = &ctx.cfg.regressor;
    let triplet_path = rc
        .triplets
        .as_ref()
        .ok_or_else(|| Error::config("train-regressor needs `regressor.triplets`"))?;
    let file = crate::density::load_triplets(&ctx.resolve(triplet_path))?;
    let total = file.triplets.len();
    let (clean, degenerate) = partition_clean(file.triplets);
    println!("loaded {total} triplets: {} clean, {degenerate} degenerate", clean.len());

    let mode = ctx.mode.unwrap_or(RegressorMode::Pixel);
    let (train_idx, eval_idx) = split_indices(
        clean.len(),
        rc.eval_fraction,
        derive_seed(ctx.seed, TAG_SPLIT),
    )?;

    let arch = NetworkSpec::mlp(
        file.output_dim,
        &rc.hidden,
        Activation::Tanh,
        1,
        Activation::Identity,
    )?;
    let mut tcfg = TrainingConfig::regressor_defaults(ctx.seed);
    tcfg.learning_rate = rc.learning_rate;
    tcfg.epochs = rc.epochs;
    tcfg.batch_size = rc.batch_size;

    let train_set: Vec<&DensityTriplet> = train_idx.iter().map(|&i| &clean[i]).collect();
    let (regressor, report): (Regressor, RegressorReport) = match mode {
        RegressorMode::Pixel => {
            let inputs = triplet_inputs(&clean, &train_idx)?;
            let targets: Vec<f64> = train_set.iter().map(|t| t.log_px).collect();
            train_regressor(&inputs, &targets, &arch, &tcfg)?
        }
        RegressorMode::Latent => {
            let prior = LatentPrior::new(file.latent_dim)?;
            let owned: Vec<DensityTriplet> = train_set.iter().map(|&t| t.clone()).collect();
            let labels = latent_labels_from_triplets(&owned, &prior)?;
            train_latent_regressor(&labels, &arch, &tcfg)?
        }
    };

    // Held-out report: R^2 against this mode's own labels, plus the spread
    // of the predictions themselves.
    let eval_inputs = triplet_inputs(&clean, &eval_idx)?;
    let eval_targets: Vec<f64> = match mode {
        RegressorMode::Pixel => eval_idx.iter().map(|&i| clean[i].log_px).collect(),
        RegressorMode::Latent => {
            let prior = LatentPrior::new(file.latent_dim)?;
            let mut t = Vec::with_capacity(eval_idx.len());
            for &i in &eval_idx {
                t.push(prior.log_density(&clean[i].z)?);
            }
            t
        }
    };
    let preds = regressor.predict_batch(&eval_inputs)?;
    let r2 = crate::train::r_squared(&preds, &eval_targets)?;
    let pred_stats = crate::analysis::summary_stats(&preds)?;
    println!(
        "{} mode: held-out R^2 {:.4} on {} samples, prediction std {:.4}",
        mode.name(),
        r2,
        eval_idx.len(),
        pred_stats.std
    );

    let reg_path = ctx.out().join(REGRESSOR_FILE);
    regressor.save(&reg_path, "regressor")?;
    let metrics = json!({
        "mode": mode.name(),
        "triplets_total": total,
        "triplets_clean": clean.len(),
        "triplets_degenerate": degenerate,
        "train_count": train_idx.len(),
        "eval_count": eval_idx.len(),
        "r_squared": r2,
        "prediction_std": pred_stats.std,
        "prediction_mean": pred_stats.mean,
        "final_mse": report.epoch_mse.last().copied(),
    });
    fs::write(
        ctx.out().join("metrics.json"),
        format!("{}\n", serde_json::to_string_pretty(&metrics).expect("json")),
    )?;
    println!("wrote {}", reg_path.display());
    Ok(())
}

/// Mosaic the given joint-report ids that fall inside one dataset.
fn dump_grid_side(
    ds: &Dataset,
    offset: usize,
    ids: &[usize],
    path: &Path,
    grid_cols: usize,
) -> Result<()> {
    let local: Vec<usize> = ids
        .iter()
        .filter(|&&id| id >= offset && id < offset + ds.len())
        .map(|&id| id - offset)
        .collect();
    if local.is_empty() {
        return Ok(());
    }
    image_grid_dump(ds, &local, path, grid_cols.min(local.len()))
}

fn composition_json(ids: &[usize], report: &DensityReport, k: usize) -> Result<serde_json::Value> {
    let labels: Vec<i64> = report.entries.iter().map(|e| e.label).collect();
    let comp = class_composition(ids, &labels, k)?;
    let as_strings: std::collections::BTreeMap<String, f64> =
        comp.into_iter().map(|(c, f)| (c.to_string(), f)).collect();
    Ok(json!(as_strings))
}

fn cmd_evaluate(ctx: &Ctx) -> Result<()> {
    let ec = ctx
        .cfg
        .evaluate
        .as_ref()
        .ok_or_else(|| Error::config("evaluate needs an [evaluate] section"))?;
    let regressor = Regressor::load(&ctx.resolve(&ec.regressor), "regressor")?;
    let ds_a = resolve_dataset(ctx, ctx.dataset("evaluate")?, TAG_DATASET)?;

    // Three shapes of report: cross-dataset, train/test split, single.
    let (report, ds_b) = if let Some(dcb) = &ec.dataset_b {
        let ds_b = resolve_dataset(ctx, dcb, TAG_DATASET_B)?;
        let report =
            cross_dataset_report(&regressor, &ds_a, &ec.tag, &ds_b, &ec.tag_b, ec.bin_count)?;
        (report, Some(ds_b))
    } else if let Some(test_count) = ec.test_count {
        let (train, test) =
            split_train_test(&ds_a, test_count, derive_seed(ctx.seed, TAG_SPLIT))?;
        let report =
            cross_dataset_report(&regressor, &train, "train", &test, "test", ec.bin_count)?;
        (report, Some(test))
    } else {
        (
            evaluate_dataset(&regressor, &ds_a, &ec.tag, ec.bin_count)?,
            None,
        )
    };

    let k = ec.top_k.min(report.entries.len());
    let (top, bottom) = rank_extremes(&report, k)?;

    let csv = fs::File::create(ctx.out().join("report.csv"))?;
    write_report_csv(csv, &report)?;

    let mut summary = summary_json(&report);
    let obj = summary.as_object_mut().expect("summary is an object");
    obj.insert("top_k".into(), json!(k));
    obj.insert("top_ids".into(), json!(top));
    obj.insert("bottom_ids".into(), json!(bottom));
    obj.insert("top_class_composition".into(), composition_json(&top, &report, k)?);
    obj.insert(
        "bottom_class_composition".into(),
        composition_json(&bottom, &report, k)?,
    );
    if ec.dataset_b.is_some() {
        // The interpretability phenomenon of interest: does the foreign
        // tag sit above the native one in the regressor's eyes?
        let median = |tag: &str| report.stats.get(tag).map(|s| s.median);
        if let (Some(ma), Some(mb)) = (median(&ec.tag), median(&ec.tag_b)) {
            obj.insert(
                "foreign_median_exceeds_native".into(),
                json!(mb > ma),
            );
        }
    }
    fs::write(
        ctx.out().join("summary.json"),
        format!("{}\n", serde_json::to_string_pretty(&summary).expect("json")),
    )?;

    for (tag, stats) in &report.stats {
        println!(
            "{tag}: {} items, median log-density {:.4}, mean {:.4}, std {:.4}",
            stats.count, stats.median, stats.mean, stats.std
        );
    }
    if let Some(ks) = report.ks_between_tags {
        println!("KS between tags: {ks:.4}");
    }

    if ec.mosaics {
        if ds_a.raster().is_some() {
            dump_grid_side(&ds_a, 0, &top, &ctx.out().join("top_a.pnm"), ec.grid_cols)?;
            dump_grid_side(&ds_a, 0, &bottom, &ctx.out().join("bottom_a.pnm"), ec.grid_cols)?;
        }
        if let Some(b) = &ds_b {
            if b.raster().is_some() && ec.dataset_b.is_some() {
                let off = ds_a.len();
                dump_grid_side(b, off, &top, &ctx.out().join("top_b.pnm"), ec.grid_cols)?;
                dump_grid_side(b, off, &bottom, &ctx.out().join("bottom_b.pnm"), ec.grid_cols)?;
            }
        }
    }
    println!("reports written to {}", ctx.out().display());
    Ok(())
}

fn cmd_verify(ctx: &Ctx) -> Result<()> {
    let outcomes = verify::run_all(ctx.seed);
    for o in &outcomes {
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("{status} {} ({})", o.name, o.detail);
    }
    if let Some(out) = &ctx.out {
        let rows: Vec<serde_json::Value> = outcomes
            .iter()
            .map(|o| json!({"name": o.name, "passed": o.passed, "detail": o.detail}))
            .collect();
        let doc = json!({"seed": ctx.seed, "checks": rows, "all_passed": verify::all_passed(&outcomes)});
        fs::write(
            out.join("verify.json"),
            format!("{}\n", serde_json::to_string_pretty(&doc).expect("json")),
        )?;
    }
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    if failed > 0 {
        return Err(Error::numerical(format!(
            "{failed} of {} invariant checks failed",
            outcomes.len()
        )));
    }
    println!("all {} invariant checks passed", outcomes.len());
    Ok(())
}
