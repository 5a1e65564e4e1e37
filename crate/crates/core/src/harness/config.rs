//! Experiment configuration: JSON with sections `task`, `architecture`,
//! `init`, `train`, `search` and `seeds`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::search::SearchConfig;
use crate::error::{Error, Result};
use crate::nn::{BN_EPS, BN_MOMENTUM};
use crate::tasks::{SineVariant, ToyImageConfig};

fn default_tau() -> usize {
    3
}

fn default_n_test() -> usize {
    1000
}

fn default_true() -> bool {
    true
}

/// Where compositional source images come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ImageSource {
    /// Procedural class-conditional images.
    Toy {
        train_images: usize,
        test_images: usize,
        #[serde(default)]
        config: ToyImageConfig,
    },
    /// A directory holding the CIFAR-10 binary batches.
    Cifar { dir: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TaskConfig {
    Sine {
        /// Module counts `k` of the target function.
        dims: Vec<usize>,
        /// Input dimension; `m = k` when absent.
        #[serde(default)]
        m: Option<usize>,
        #[serde(default = "default_tau")]
        tau: usize,
        #[serde(default = "default_variant")]
        variant: SineVariant,
        /// Training-set size when no search is configured.
        #[serde(default)]
        n_train: Option<u64>,
        #[serde(default = "default_n_test")]
        n_test: usize,
    },
    Compositional {
        /// Images per input `k`.
        dims: Vec<usize>,
        source: ImageSource,
        #[serde(default)]
        n_train: Option<u64>,
        #[serde(default = "default_n_test")]
        n_test: usize,
        #[serde(default)]
        ood_split: Option<f64>,
        #[serde(default)]
        noise_sigma: f64,
        #[serde(default = "default_true")]
        normalize: bool,
    },
}

fn default_variant() -> SineVariant {
    SineVariant::Linear
}

impl TaskConfig {
    pub fn dims(&self) -> &[usize] {
        match self {
            TaskConfig::Sine { dims, .. } | TaskConfig::Compositional { dims, .. } => dims,
        }
    }

    pub fn n_train(&self) -> Option<u64> {
        match self {
            TaskConfig::Sine { n_train, .. } | TaskConfig::Compositional { n_train, .. } => *n_train,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TaskConfig::Sine {
                variant: SineVariant::Linear,
                ..
            } => "sine-linear",
            TaskConfig::Sine {
                variant: SineVariant::Distance,
                ..
            } => "sine-distance",
            TaskConfig::Compositional { .. } => "compositional",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArchKind {
    Monolithic,
    Modular,
}

fn default_modules_per_dim() -> usize {
    5
}

fn default_projection_width() -> usize {
    1
}

/// A network family. `layers` counts dense layers, so `layers − 1` hidden
/// layers of `width` units; for modular networks it describes each module
/// body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    #[serde(default)]
    pub name: Option<String>,
    pub kind: ArchKind,
    pub width: usize,
    pub layers: usize,
    #[serde(default)]
    pub batchnorm: bool,
    /// Fixed module count; otherwise `modules_per_dim · k`.
    #[serde(default)]
    pub modules: Option<usize>,
    #[serde(default = "default_modules_per_dim")]
    pub modules_per_dim: usize,
    /// All modules share one body.
    #[serde(default)]
    pub shared: bool,
    /// Columns of each matrix projection (compositional task).
    #[serde(default = "default_projection_width")]
    pub projection_width: usize,
    /// Output width of each module body before the linear head
    /// (compositional task); defaults to `width`.
    #[serde(default)]
    pub body_out: Option<usize>,
}

impl ArchitectureConfig {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| {
            let kind = match self.kind {
                ArchKind::Monolithic => "monolithic",
                ArchKind::Modular => "modular",
            };
            format!("{kind}-w{}-l{}", self.width, self.layers)
        })
    }

    pub fn modules_for(&self, k: usize) -> usize {
        self.modules.unwrap_or(self.modules_per_dim * k)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMethod {
    Random,
    Kernel,
    GroundTruth,
}

impl InitMethod {
    pub fn name(&self) -> &'static str {
        match self {
            InitMethod::Random => "random",
            InitMethod::Kernel => "kernel",
            InitMethod::GroundTruth => "ground-truth",
        }
    }
}

fn default_methods() -> Vec<InitMethod> {
    vec![InitMethod::Random]
}

fn default_sigma() -> f64 {
    1.0
}

fn default_init_iters() -> usize {
    100
}

fn default_init_batch() -> usize {
    128
}

fn default_init_lr() -> f64 {
    0.01
}

fn default_jitter() -> f64 {
    1e-6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    #[serde(default = "default_methods")]
    pub methods: Vec<InitMethod>,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default = "default_init_iters")]
    pub iters: usize,
    /// Capped at the training-set size.
    #[serde(default = "default_init_batch")]
    pub batch_size: usize,
    #[serde(default = "default_init_lr")]
    pub lr: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Keep training the projections after initialization.
    #[serde(default = "default_true")]
    pub train_projections: bool,
}

impl Default for InitSection {
    fn default() -> Self {
        InitSection {
            methods: default_methods(),
            sigma: default_sigma(),
            iters: default_init_iters(),
            batch_size: default_init_batch(),
            lr: default_init_lr(),
            jitter: default_jitter(),
            train_projections: true,
        }
    }
}

/// Iteration count for task dimensions up to `max_dim`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimIterations {
    pub max_dim: usize,
    pub iterations: u64,
}

fn default_log_every() -> u64 {
    100
}

fn default_train_batch() -> usize {
    128
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    pub lr: f64,
    pub iterations: u64,
    #[serde(default = "default_train_batch")]
    pub batch_size: usize,
    #[serde(default = "default_log_every")]
    pub log_every: u64,
    /// Overrides `iterations` for the first entry whose `max_dim ≥ k`.
    #[serde(default)]
    pub iterations_by_dim: Vec<DimIterations>,
}

impl TrainSection {
    pub fn iterations_for(&self, k: usize) -> u64 {
        self.iterations_by_dim
            .iter()
            .find(|d| k <= d.max_dim)
            .map_or(self.iterations, |d| d.iterations)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSection {
    /// Target test loss.
    pub eps: f64,
    #[serde(default)]
    pub c0: Option<f64>,
    #[serde(default)]
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub stop_gap: Option<f64>,
    #[serde(default)]
    pub c_max: Option<f64>,
}

impl SearchSection {
    pub fn search_config(&self) -> SearchConfig {
        let d = SearchConfig::default();
        SearchConfig {
            c0: self.c0.unwrap_or(d.c0),
            max_iters: self.max_iters.unwrap_or(d.max_iters),
            stop_gap: self.stop_gap.unwrap_or(d.stop_gap),
            c_max: self.c_max.unwrap_or(d.c_max),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskConfig,
    pub architecture: Vec<ArchitectureConfig>,
    #[serde(default)]
    pub init: InitSection,
    pub train: TrainSection,
    #[serde(default)]
    pub search: Option<SearchSection>,
    pub seeds: Vec<u64>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Every schema violation, reported together.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let dims = self.task.dims();
        if dims.contains(&0) {
            errs.push("task.dims entries must be positive".to_string());
        }
        match &self.task {
            TaskConfig::Sine { m, tau, n_test, .. } => {
                if *tau == 0 {
                    errs.push("task.tau must be positive".into());
                }
                if *m == Some(0) {
                    errs.push("task.m must be positive".into());
                }
                if *n_test == 0 {
                    errs.push("task.n_test must be positive".into());
                }
            }
            TaskConfig::Compositional {
                source,
                n_test,
                ood_split,
                noise_sigma,
                ..
            } => {
                if *n_test == 0 {
                    errs.push("task.n_test must be positive".into());
                }
                if let Some(f) = ood_split {
                    if !(*f > 0.0 && *f < 1.0) {
                        errs.push(format!("task.ood_split must lie in (0, 1), got {f}"));
                    }
                }
                if !(*noise_sigma >= 0.0) {
                    errs.push(format!("task.noise_sigma must be nonnegative, got {noise_sigma}"));
                }
                if let ImageSource::Toy {
                    train_images,
                    test_images,
                    ..
                } = source
                {
                    if *train_images == 0 || *test_images == 0 {
                        errs.push("task.source image counts must be positive".into());
                    }
                }
                if self.init.methods.contains(&InitMethod::GroundTruth) {
                    errs.push("init.methods: ground-truth is only defined for sine tasks".into());
                }
            }
        }
        if self.search.is_none() && self.task.n_train().is_none() && !dims.is_empty() {
            errs.push("task.n_train is required when no search section is given".into());
        }
        if let Some(n) = self.task.n_train() {
            if n == 0 {
                errs.push("task.n_train must be positive".into());
            }
        }
        for (i, a) in self.architecture.iter().enumerate() {
            if a.width == 0 || a.layers == 0 {
                errs.push(format!("architecture[{i}]: width and layers must be positive"));
            }
            if a.kind == ArchKind::Modular {
                if a.modules == Some(0) || (a.modules.is_none() && a.modules_per_dim == 0) {
                    errs.push(format!("architecture[{i}]: module count must be positive"));
                }
                if a.projection_width == 0 {
                    errs.push(format!("architecture[{i}]: projection_width must be positive"));
                }
                if a.body_out == Some(0) {
                    errs.push(format!("architecture[{i}]: body_out must be positive"));
                }
            }
        }
        let mut labels: Vec<String> = self.architecture.iter().map(|a| a.label()).collect();
        labels.sort();
        if labels.windows(2).any(|w| w[0] == w[1]) {
            errs.push("architecture labels must be unique".into());
        }
        let init = &self.init;
        if !(init.sigma > 0.0) {
            errs.push(format!("init.sigma must be positive, got {}", init.sigma));
        }
        if init.batch_size == 0 {
            errs.push("init.batch_size must be positive".into());
        }
        if !(init.lr >= 0.0) {
            errs.push(format!("init.lr must be nonnegative, got {}", init.lr));
        }
        if !(init.jitter >= 0.0) {
            errs.push(format!("init.jitter must be nonnegative, got {}", init.jitter));
        }
        let t = &self.train;
        if !(t.lr >= 0.0 && t.lr.is_finite()) {
            errs.push(format!("train.lr must be finite and nonnegative, got {}", t.lr));
        }
        if t.batch_size == 0 {
            errs.push("train.batch_size must be positive".into());
        }
        if t.log_every == 0 {
            errs.push("train.log_every must be positive".into());
        }
        if let Some(s) = &self.search {
            if !(s.eps > 0.0) {
                errs.push(format!("search.eps must be positive, got {}", s.eps));
            }
            if let Err(Error::Config(e)) = s.search_config().validate() {
                errs.extend(e.into_iter().map(|m| format!("search: {m}")));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    /// Resolved configuration plus the constants a run depends on.
    pub fn manifest(&self) -> serde_json::Value {
        serde_json::json!({
            "config_hash": self.hash(),
            "config": self,
            "constants": {
                "batchnorm_momentum": BN_MOMENTUM,
                "batchnorm_eps": BN_EPS,
                "weight_init": "N(0, 1/fan_in), zero biases",
                "kernel_jitter": format!("{} x kernel diagonal, escalated x10 up to 1e-2", self.init.jitter),
                "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
            },
            "version": env!("CARGO_PKG_VERSION"),
        })
    }
}
