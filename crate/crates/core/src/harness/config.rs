use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::data::{self, builtin, Dataset, SplitSpec, TargetColumn, Task};
use crate::error::{Error, Result};
use crate::explainers::Explainer;
use crate::model::{Activation, AdamConfig};
use crate::neighborhood::NeighborhoodSpec;
use crate::regularizers::{RegularizerConfig, RegularizerKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Csv {
        path: PathBuf,
        target_column: TargetColumn,
        task: Task,
    },
    /// Synthetic piecewise-linear regression surrogate.
    Piecewise { n: usize, d: usize, noise: f64, seed: u64 },
    /// Synthetic linear regression with Gaussian noise.
    Linear { n: usize, d: usize, noise: f64, seed: u64 },
    /// The embedded 8x8 digits, pixels in `[0, 1]`.
    Digits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
    /// Standardize features (and regression targets) with training statistics.
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_train_fraction() -> f64 {
    0.8
}

fn default_true() -> bool {
    true
}

impl DataConfig {
    pub fn piecewise(n: usize, d: usize, noise: f64, seed: u64) -> Self {
        Self {
            source: DataSource::Piecewise { n, d, noise, seed },
            train_fraction: 0.8,
            split_seed: 0,
            standardize: true,
        }
    }

    pub fn digits() -> Self {
        Self {
            source: DataSource::Digits,
            train_fraction: 0.8,
            split_seed: 0,
            standardize: false,
        }
    }

    pub fn load(&self) -> Result<Dataset> {
        Ok(match &self.source {
            DataSource::Csv {
                path,
                target_column,
                task,
            } => data::load_csv(path, target_column.clone(), *task)?,
            DataSource::Piecewise { n, d, noise, seed } => builtin::piecewise(*n, *d, *noise, *seed),
            DataSource::Linear { n, d, noise, seed } => builtin::linear(*n, *d, *noise, *seed),
            DataSource::Digits => builtin::digits(),
        })
    }

    /// Loads and splits; standardization (when enabled) uses training statistics.
    pub fn prepare(&self) -> Result<(Dataset, Dataset)> {
        let ds = self.load()?;
        let spec = SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.split_seed,
        };
        if self.standardize {
            data::split(&ds, spec)
        } else {
            data::split_raw(&ds, spec)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerConfig {
    Sgd { learning_rate: f64 },
    Adam { learning_rate: f64 },
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig::Adam { learning_rate: 1e-3 }
    }
}

impl OptimizerConfig {
    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimizerConfig::Sgd { learning_rate } | OptimizerConfig::Adam { learning_rate } => learning_rate,
        }
    }

    pub(crate) fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate(),
            ..AdamConfig::default()
        }
    }
}

/// Which explainers to evaluate, and with what neighborhoods.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// Neighborhood for the fidelity and stability metrics; its width and kind
    /// are also used for LIME's sampling.
    pub neighborhood: NeighborhoodSpec,
    pub explainers: Vec<ExplainerChoice>,
    /// LIME sample count; 0 selects `max(5 (d + 1), 100)`.
    #[serde(default)]
    pub lime_samples: usize,
    #[serde(default = "default_lime_ridge")]
    pub lime_ridge: f64,
    /// Neighbors drawn for the stability metric (each one re-runs the explainer).
    #[serde(default = "default_stability_samples")]
    pub stability_samples: usize,
    /// Evaluate only the first `max_points` test points.
    #[serde(default)]
    pub max_points: Option<usize>,
    #[serde(default)]
    pub bound: Option<BoundConfig>,
}

fn default_lime_ridge() -> f64 {
    1e-6
}

fn default_stability_samples() -> usize {
    20
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerChoice {
    Lime,
    Taylor,
    Saliency,
}

impl std::str::FromStr for ExplainerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lime" => Ok(ExplainerChoice::Lime),
            "taylor" => Ok(ExplainerChoice::Taylor),
            "saliency" => Ok(ExplainerChoice::Saliency),
            _ => Err(Error::Config(format!("unknown explainer `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub delta: f64,
    pub mc_samples: usize,
    /// Cap on training points used for the bound.
    #[serde(default)]
    pub max_points: Option<usize>,
}

impl EvalConfig {
    /// Gaussian sigma = 0.1 neighborhoods and LIME, as used for tabular data.
    pub fn tabular() -> Self {
        Self {
            neighborhood: NeighborhoodSpec::gaussian(0.1, 100, 0),
            explainers: vec![ExplainerChoice::Lime],
            lime_samples: 0,
            lime_ridge: default_lime_ridge(),
            stability_samples: default_stability_samples(),
            max_points: None,
            bound: None,
        }
    }

    /// Uniform +-0.05 pixel neighborhoods and saliency maps.
    pub fn images() -> Self {
        Self {
            neighborhood: NeighborhoodSpec::uniform(0.05, 20, 0),
            explainers: vec![ExplainerChoice::Saliency],
            lime_samples: 0,
            lime_ridge: default_lime_ridge(),
            stability_samples: default_stability_samples(),
            max_points: None,
            bound: None,
        }
    }

    pub fn explainer(&self, choice: ExplainerChoice) -> Explainer {
        match choice {
            ExplainerChoice::Lime => Explainer::Lime {
                neighborhood: self.neighborhood.with_m(self.lime_samples),
                ridge: self.lime_ridge,
            },
            ExplainerChoice::Taylor => Explainer::Taylor,
            ExplainerChoice::Saliency => Explainer::Saliency,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub data: DataConfig,
    /// Hidden layer widths; input and output widths come from the data.
    pub hidden_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub regularizer: RegularizerConfig,
    pub eval: EvalConfig,
}

impl TrainConfig {
    /// Tabular regression on the noisy piecewise surrogate, with the fidelity
    /// regularizer over Gaussian sigma = 0.5 neighborhoods.
    pub fn tabular_default() -> Self {
        Self {
            data: DataConfig::piecewise(200, 5, 1.0, 0),
            hidden_sizes: vec![32, 32],
            activation: Activation::Tanh,
            optimizer: OptimizerConfig::Adam { learning_rate: 0.01 },
            epochs: 300,
            batch_size: 16,
            seed: 0,
            regularizer: RegularizerConfig::new(RegularizerKind::Fidelity, 0.1, NeighborhoodSpec::gaussian(0.5, 0, 0)),
            eval: EvalConfig::tabular(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        if self.hidden_sizes.contains(&0) {
            return Err(Error::Config("hidden layer widths must be >= 1".into()));
        }
        let lr = self.optimizer.learning_rate();
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
        }
        if !(self.data.train_fraction > 0.0 && self.data.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        self.regularizer.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.eval.neighborhood.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.eval.explainers.is_empty() {
            return Err(Error::Config("at least one explainer is required".into()));
        }
        Ok(())
    }

    /// The same run with the regularizer switched off.
    pub fn unregularized(&self) -> Self {
        let mut cfg = self.clone();
        cfg.regularizer.kind = RegularizerKind::None;
        cfg.regularizer.gamma = 0.0;
        cfg
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_json(&text)
    }
}
