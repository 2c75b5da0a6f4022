//! Experiment configuration: a single TOML file fully determines datasets,
//! architecture, training settings, and the evaluation grid. Unknown keys are
//! rejected so typos fail loudly instead of silently using defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use waldo::data::digits::make_digits_analog;
use waldo::data::{
    load_image_dataset, load_tabular_dataset, make_retail_analog, make_synthetic_mixture,
    read_snapshot, DatasetSplit, Descriptor, ImageDataset, MixtureSpec, SplitMeta,
};
use waldo::losses::AdvantageConfig;
use waldo::model::ArchitectureSpec;
use waldo::nn::Act;
use waldo::trainer::{Method, TrainConfig};

/// Environment variable that overrides `dataset.path` for file-backed
/// sources, so one config works across machines with different data roots.
pub const DATA_DIR_ENV: &str = "WALDO_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodName {
    Waldo,
    Wae,
    Cora,
}

impl MethodName {
    pub fn as_method(self) -> Method {
        match self {
            MethodName::Waldo => Method::Waldo,
            MethodName::Wae => Method::Wae,
            MethodName::Cora => Method::Cora,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MethodName::Waldo => "waldo",
            MethodName::Wae => "wae",
            MethodName::Cora => "cora",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub method: MethodName,
    pub output_dir: PathBuf,
    /// One full train/score run per seed; aggregates are over exactly this list.
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub architecture: ArchitectureConfig,
    #[serde(default)]
    pub train: TrainBlock,
    #[serde(default)]
    pub eval: Option<EvalBlock>,
    #[serde(default)]
    pub generate: Option<GenerateBlock>,
    #[serde(default)]
    pub ablation: Option<AblationBlock>,
    #[serde(default)]
    pub convergence: Option<ConvergenceBlock>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| flatten_toml_error(&e, text))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("seeds must list at least one seed");
        }
        self.architecture.validate()?;
        self.dataset.validate()?;
        if let Some(eval) = &self.eval {
            eval.validate()?;
        }
        Ok(())
    }

    /// Training config for one run. Checkpoints land under the run directory
    /// when `with_checkpoints` is set.
    pub fn train_config(&self, seed: u64, checkpoint_dir: Option<PathBuf>) -> TrainConfig {
        self.train.to_train_config(seed, checkpoint_dir)
    }

    pub fn seed_dir(&self, seed: u64) -> PathBuf {
        self.output_dir.join(format!("seed-{seed}"))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// One of: synthetic, digits-analog, retail-analog, snapshot, kdd,
    /// mnist, fmnist, cifar10.
    pub name: String,
    /// Directory (or file, for kdd) holding the raw data of file-backed
    /// sources. `WALDO_DATA_DIR` overrides it.
    pub path: Option<PathBuf>,
    /// Outlier fraction of the unlabeled mixture.
    pub nu: Option<f64>,
    pub n_positive: Option<usize>,
    pub n_unlabeled: Option<usize>,
    pub seed: Option<u64>,
    /// Outlier fraction injected into the labeled-positive set.
    pub contamination: Option<f64>,
    /// Image datasets: which class plays the inlier role.
    pub inlier_class: Option<usize>,
    /// Synthetic mixtures: component distributions.
    pub inlier_dist: Option<Descriptor>,
    pub outlier_dist: Option<Descriptor>,
    /// Retail analog: raw pool sizes.
    pub n_inliers: Option<usize>,
    pub n_outliers: Option<usize>,
}

impl DatasetConfig {
    fn validate(&self) -> Result<()> {
        match self.name.as_str() {
            "synthetic" | "digits-analog" | "retail-analog" | "snapshot" | "kdd" | "mnist"
            | "fmnist" | "cifar10" => Ok(()),
            other => bail!(
                "unknown dataset `{other}`; expected one of synthetic, digits-analog, \
                 retail-analog, snapshot, kdd, mnist, fmnist, cifar10"
            ),
        }
    }

    fn mixture_spec(&self, nu: Option<f64>, contamination: Option<f64>) -> Result<MixtureSpec> {
        let nu = nu
            .or(self.nu)
            .context("dataset.nu is required for this source")?;
        let n_positive = self
            .n_positive
            .context("dataset.n_positive is required for this source")?;
        let n_unlabeled = self
            .n_unlabeled
            .context("dataset.n_unlabeled is required for this source")?;
        let mut spec = MixtureSpec::new(nu, n_positive, n_unlabeled, self.seed.unwrap_or(0));
        if let Some(c) = contamination.or(self.contamination) {
            spec = spec.with_contamination(c);
        }
        spec.validate()?;
        Ok(spec)
    }

    fn data_path(&self) -> Result<PathBuf> {
        if let Ok(dir) = std::env::var(DATA_DIR_ENV) {
            return Ok(PathBuf::from(dir));
        }
        self.path
            .clone()
            .with_context(|| format!("dataset.path or ${DATA_DIR_ENV} is required for `{}`", self.name))
    }

    /// Realizes the split. `nu`/`contamination` overrides support evaluation
    /// grids that sweep mixture parameters without editing the config.
    pub fn build(&self, nu: Option<f64>, contamination: Option<f64>) -> Result<DatasetSplit> {
        let split = match self.name.as_str() {
            "synthetic" => {
                let spec = self.mixture_spec(nu, contamination)?;
                let inlier = self
                    .inlier_dist
                    .clone()
                    .context("dataset.inlier_dist is required for synthetic")?;
                let outlier = self
                    .outlier_dist
                    .clone()
                    .context("dataset.outlier_dist is required for synthetic")?;
                make_synthetic_mixture(&spec, &inlier, &outlier)?
            }
            "digits-analog" => {
                let spec = self.mixture_spec(nu, contamination)?;
                make_digits_analog(self.inlier_class.unwrap_or(0), &spec)?
            }
            "retail-analog" => {
                let n_in = self.n_inliers.context("dataset.n_inliers is required")?;
                let n_out = self.n_outliers.context("dataset.n_outliers is required")?;
                make_retail_analog(n_in, n_out, self.seed.unwrap_or(0))?
            }
            "snapshot" => self.load_snapshot(nu, contamination)?,
            "kdd" => {
                let spec = self.mixture_spec(nu, contamination)?;
                load_tabular_dataset(&self.data_path()?, &spec)?
            }
            name => {
                let spec = self.mixture_spec(nu, contamination)?;
                let ds = ImageDataset::parse(name).expect("validated above");
                let class = self
                    .inlier_class
                    .context("dataset.inlier_class is required for image sources")?;
                load_image_dataset(ds, class, &spec, &self.data_path()?)?
            }
        };
        Ok(split)
    }

    /// Reads back a split written by `synth`: three sample files under one
    /// directory. The mixture spec is reconstructed from the realized counts.
    fn load_snapshot(&self, nu: Option<f64>, contamination: Option<f64>) -> Result<DatasetSplit> {
        let dir = self.data_path()?;
        let read = |stem: &str| -> Result<_> {
            let path = dir.join(format!("{stem}.csv"));
            read_snapshot(&path).with_context(|| format!("reading {}", path.display()))
        };
        let positive = read("positive")?;
        let unlabeled = read("unlabeled")?;
        let test = read("test")?;
        let dim = positive
            .first()
            .or(unlabeled.first())
            .map(|s| s.features.len())
            .context("snapshot is empty")?;
        let realized_nu = unlabeled
            .iter()
            .filter(|s| s.true_label.is_outlier())
            .count() as f64
            / unlabeled.len().max(1) as f64;
        let spec = MixtureSpec::new(
            nu.or(self.nu).unwrap_or(realized_nu),
            positive.len(),
            unlabeled.len(),
            self.seed.unwrap_or(0),
        );
        let _ = contamination;
        let split = DatasetSplit {
            positive,
            unlabeled,
            test,
            dim,
            meta: SplitMeta {
                dataset: "snapshot".to_string(),
                spec,
            },
        };
        split.validate()?;
        Ok(split)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    /// Named preset: kdd, mnist, fmnist, cifar10, desk-mnist, desk-fmnist,
    /// toy-2d, weekly7.
    pub preset: Option<String>,
    /// Custom fully connected stack, for sources whose dimension no preset
    /// matches.
    pub mlp: Option<MlpConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
    /// Bound decoder outputs to (0,1); leave unset for unbounded outputs.
    #[serde(default)]
    pub sigmoid_output: bool,
    #[serde(default = "default_disc_hidden")]
    pub disc_hidden: usize,
}

fn default_disc_hidden() -> usize {
    64
}

impl ArchitectureConfig {
    fn validate(&self) -> Result<()> {
        match (&self.preset, &self.mlp) {
            (Some(_), Some(_)) => bail!("architecture: set either preset or mlp, not both"),
            (None, None) => bail!("architecture: set preset or mlp"),
            _ => Ok(()),
        }
    }

    pub fn resolve(&self) -> Result<ArchitectureSpec> {
        if let Some(name) = &self.preset {
            return ArchitectureSpec::preset(name).with_context(|| {
                format!(
                    "unknown architecture preset `{name}`; expected one of kdd, mnist, fmnist, \
                     cifar10, desk-mnist, desk-fmnist, toy-2d, weekly7"
                )
            });
        }
        let mlp = self.mlp.as_ref().expect("validated");
        let act = mlp.sigmoid_output.then_some(Act::Sigmoid);
        let spec = ArchitectureSpec::mlp(
            "custom-mlp",
            mlp.input_dim,
            &mlp.hidden,
            mlp.latent_dim,
            act,
            mlp.disc_hidden,
        );
        spec.validate()?;
        Ok(spec)
    }
}

/// Mirrors the trainer's settings minus the per-run seed and checkpoint
/// directory, which the harness controls.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainBlock {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_ae: f64,
    pub lr_disc: f64,
    pub lambda: f64,
    pub advantage: AdvantageConfig,
    pub positive_only_disc: bool,
    pub discriminator_steps_per_batch: usize,
    pub eval_every: usize,
    pub grad_clip: Option<f64>,
    pub anchor_positives: bool,
    pub freeze_outlier_decoder: bool,
}

impl Default for TrainBlock {
    fn default() -> Self {
        let base = TrainConfig::default();
        Self {
            epochs: base.epochs,
            batch_size: base.batch_size,
            lr_ae: base.lr_ae,
            lr_disc: base.lr_disc,
            lambda: base.lambda,
            advantage: base.adv,
            positive_only_disc: base.positive_only_disc,
            discriminator_steps_per_batch: base.discriminator_steps_per_batch,
            eval_every: base.eval_every,
            grad_clip: base.grad_clip,
            anchor_positives: base.anchor_positives,
            freeze_outlier_decoder: base.freeze_outlier_decoder,
        }
    }
}

impl TrainBlock {
    pub fn to_train_config(&self, seed: u64, checkpoint_dir: Option<PathBuf>) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            lr_ae: self.lr_ae,
            lr_disc: self.lr_disc,
            lambda: self.lambda,
            adv: self.advantage,
            positive_only_disc: self.positive_only_disc,
            discriminator_steps_per_batch: self.discriminator_steps_per_batch,
            seed,
            eval_every: self.eval_every,
            grad_clip: self.grad_clip,
            checkpoint_dir,
            anchor_positives: self.anchor_positives,
            freeze_outlier_decoder: self.freeze_outlier_decoder,
        }
    }
}

/// Grid for the results table: every (nu, contamination, method) cell is
/// trained per seed and scored on the held-out test mixture.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBlock {
    pub nus: Vec<f64>,
    #[serde(default = "default_contaminations")]
    pub contaminations: Vec<f64>,
    #[serde(default = "default_methods")]
    pub methods: Vec<MethodName>,
}

fn default_contaminations() -> Vec<f64> {
    vec![0.0]
}

fn default_methods() -> Vec<MethodName> {
    vec![MethodName::Waldo, MethodName::Wae, MethodName::Cora]
}

impl EvalBlock {
    fn validate(&self) -> Result<()> {
        if self.nus.is_empty() {
            bail!("eval.nus must list at least one outlier fraction");
        }
        if self.methods.is_empty() {
            bail!("eval.methods must list at least one method");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentSourceName {
    /// Standard-normal prior.
    Prior,
    /// Diagonal Gaussian fitted to encodings of detected samples.
    Fitted,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateBlock {
    #[serde(default = "default_generate_n")]
    pub n: usize,
    #[serde(default = "default_latent_source")]
    pub source: LatentSourceName,
    /// Cap on generated samples scored for nearest-reference quality.
    #[serde(default = "default_generate_n")]
    pub quality_n_eval: usize,
}

fn default_generate_n() -> usize {
    1000
}

fn default_latent_source() -> LatentSourceName {
    LatentSourceName::Fitted
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblationBlock {
    /// Independent model seeds per cell, derived from the first config seed.
    pub n_seeds: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceBlock {
    #[serde(default = "default_fraction")]
    pub fraction: f64,
    pub n_seeds: usize,
}

fn default_fraction() -> f64 {
    0.9
}

/// Collapses toml's multi-line diagnostic into one line that still names the
/// offending key and its position.
fn flatten_toml_error(err: &toml::de::Error, text: &str) -> anyhow::Error {
    let location = err
        .span()
        .map(|span| {
            let upto = &text[..span.start.min(text.len())];
            let line = upto.bytes().filter(|&b| b == b'\n').count() + 1;
            let column = upto.len() - upto.rfind('\n').map_or(0, |i| i + 1) + 1;
            format!(" at line {line} column {column}")
        })
        .unwrap_or_default();
    anyhow::anyhow!("{}{location}", err.message())
}

/// Reads and validates a config file, wrapping errors with the path so the
/// one-line report names the offending file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    ExperimentConfig::from_toml(&text).with_context(|| format!("config {}", path.display()))
}
