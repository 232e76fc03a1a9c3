//! The training configuration schema: TOML with a default for every field
//! except `algorithm`, `dataset`, and `epochs`, resolved and validated into
//! the library's run types.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;

use proxlab_core::data::{self, Dataset};
use proxlab_core::model::{Activation, LossKind, MlpSpec};
use proxlab_core::optim::{Algorithm, EtaSchedule, InnerOptimizer, LamSchedule};
use proxlab_core::regularize::RegSpec;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub dataset: DatasetConfig,
    /// Defaults to binary-L1 for the prox algorithms; must stay absent for
    /// the straight-through baseline, which takes no regularizer.
    pub regularizer: Option<RegSpec>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    #[serde(default = "default_optimizer")]
    pub optimizer: InnerOptimizer,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Record every this many epochs; the final step always records.
    #[serde(default = "default_log_every")]
    pub log_every: usize,
    /// Rounds for the alternating prox kinds (ternary, k-bit).
    #[serde(default = "default_prox_rounds")]
    pub prox_rounds: usize,
    /// Scale the prox strength by Adam's per-coordinate rate (separable
    /// binary kinds only).
    #[serde(default)]
    pub adaptive_prox: bool,
    /// Output directory; the --out flag takes precedence.
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetConfig {
    /// Seeded Gaussian blob classification.
    Blobs {
        #[serde(default = "default_data_seed")]
        seed: u64,
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_spread")]
        spread: f64,
    },
    /// Numeric CSV with a header row and a named label column.
    Csv {
        path: PathBuf,
        #[serde(default = "default_label_column")]
        label_column: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden layer widths; input and output widths come from the dataset.
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    #[serde(default = "default_loss")]
    pub loss: LossKind,
}

impl Default for ModelConfig {
    fn default() -> ModelConfig {
        ModelConfig {
            hidden: default_hidden(),
            activation: default_activation(),
            loss: default_loss(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    #[serde(default = "default_eta")]
    pub eta: EtaSchedule,
    #[serde(default = "default_lam")]
    pub lam: LamSchedule,
    /// Epoch at whose start the quantized coordinates are frozen; must not
    /// exceed `epochs`.
    pub freeze_epoch: Option<usize>,
}

impl Default for ScheduleConfig {
    fn default() -> ScheduleConfig {
        ScheduleConfig { eta: default_eta(), lam: default_lam(), freeze_epoch: None }
    }
}

fn default_optimizer() -> InnerOptimizer {
    InnerOptimizer::adam_default()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_batch_size() -> usize {
    32
}

fn default_log_every() -> usize {
    1
}

fn default_prox_rounds() -> usize {
    proxlab_core::prox::DEFAULT_PROX_ROUNDS
}

fn default_data_seed() -> u64 {
    2024
}

fn default_n() -> usize {
    600
}

fn default_classes() -> usize {
    2
}

fn default_dim() -> usize {
    8
}

fn default_spread() -> f64 {
    1.0
}

fn default_label_column() -> String {
    "label".to_string()
}

fn default_hidden() -> Vec<usize> {
    vec![16]
}

fn default_activation() -> Activation {
    Activation::Tanh
}

fn default_loss() -> LossKind {
    LossKind::CrossEntropy
}

fn default_eta() -> EtaSchedule {
    EtaSchedule::Constant { eta: 0.01 }
}

fn default_lam() -> LamSchedule {
    LamSchedule::Constant { lam: 1e-4 }
}

/// A fully resolved experiment: parsed config, loaded dataset, model
/// shape, and output directory.
pub struct Experiment {
    pub config: TrainConfig,
    pub dataset: Dataset,
    pub mlp: MlpSpec,
    pub out_dir: PathBuf,
}

/// Parse, resolve, and validate a training config. Every failure here is a
/// configuration error (exit code 2 at the command layer).
pub fn load_experiment(
    path: &Path,
    out_flag: Option<&Path>,
    seed_override: Option<u64>,
) -> Result<Experiment> {
    let raw = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let mut config: TrainConfig =
        toml::from_str(&raw).with_context(|| format!("parsing config {}", path.display()))?;

    if let Some(seed) = seed_override {
        config.seeds = vec![seed];
    }
    if config.seeds.is_empty() {
        bail!("seeds must be nonempty");
    }
    if config.batch_size == 0 {
        bail!("batch_size must be >= 1");
    }
    if config.log_every == 0 {
        bail!("log_every must be >= 1");
    }
    if let Some(freeze) = config.schedule.freeze_epoch {
        if freeze > config.epochs {
            bail!("freeze_epoch {freeze} exceeds epochs {}", config.epochs);
        }
    }

    match (config.algorithm, &config.regularizer) {
        (Algorithm::BinaryConnect, Some(_)) => {
            bail!("the straight-through baseline takes no regularizer; remove [regularizer]")
        }
        (Algorithm::BinaryConnect, None) => {}
        (_, None) => config.regularizer = Some(RegSpec::BinaryL1),
        (_, Some(spec)) => spec.validate().context("invalid [regularizer]")?,
    }

    let dataset = match &config.dataset {
        DatasetConfig::Blobs { seed, n, classes, dim, spread } => {
            data::gen_blobs(*seed, *n, *classes, *dim, *spread).context("generating blobs")?
        }
        DatasetConfig::Csv { path, label_column } => {
            data::load_csv(path, label_column)
                .with_context(|| format!("loading dataset {}", path.display()))?
        }
    };

    let mut layers = vec![dataset.dim()];
    layers.extend_from_slice(&config.model.hidden);
    layers.push(dataset.num_classes());
    let mlp = MlpSpec::new(layers, config.model.activation, config.model.loss)
        .context("invalid [model]")?;

    let out_dir = out_flag
        .map(Path::to_path_buf)
        .or_else(|| config.out_dir.clone())
        .unwrap_or_else(|| PathBuf::from("proxlab-out"));

    Ok(Experiment { config, dataset, mlp, out_dir })
}
