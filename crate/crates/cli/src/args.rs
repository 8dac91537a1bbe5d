use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use expo_core::harness::{DataConfig, DataSource, ExplainerChoice, OptimizerConfig, ToyFunction, TrainConfig};
use expo_core::{Activation, Error, RegularizerKind, Result, Task};

#[derive(Parser, Debug)]
#[command(
    name = "expo",
    version,
    about = "Train neural networks with explanation regularizers and evaluate them",
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model, evaluate it on the test split, write model.json, report.json and metrics.csv.
    Train(TrainArgs),
    /// Evaluate a saved model on the configured test split.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// One train + evaluate per value of a hyperparameter; writes frontier.csv.
    Sweep {
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Fit a 1-D toy function and write Taylor and LIME lines to demo.csv.
    DemoToy(DemoArgs),
    /// Digits with and without output-stability regularization.
    StabilityImage {
        /// Test images whose saliency maps are written out.
        #[arg(long, default_value_t = 5)]
        examples: usize,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Generalization bound on local-linear residuals of a saved model.
    Bound {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        delta: f64,
        #[arg(long, default_value_t = 1000)]
        mc_samples: usize,
        /// Training points to average over (default: all).
        #[arg(long)]
        bound_points: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Print the size, dimension and task of the configured dataset.
    Summary(TrainArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Axis {
    Gamma,
    SigmaReg,
    SigmaEval,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    /// Noisy piecewise regression, fidelity regularizer, LIME metrics.
    Tabular,
    /// 8x8 digits, stability regularizer, saliency metrics.
    Image,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum DataKind {
    Piecewise,
    Linear,
    Digits,
    Csv,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Optimizer {
    Adam,
    Sgd,
}

/// Flags mirroring `TrainConfig`. A `--config` file takes precedence over all of them.
#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    /// JSON experiment config; when given, the other config flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Preset::Tabular)]
    pub preset: Preset,
    #[arg(long, value_enum)]
    pub data: Option<DataKind>,
    /// CSV file for `--data csv`.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Target column name or 0-based index.
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub task: Option<String>,
    /// Rows to generate for synthetic data.
    #[arg(long)]
    pub n: Option<usize>,
    /// Features to generate for synthetic data.
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub data_seed: Option<u64>,
    #[arg(long, allow_negative_numbers = true)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    #[arg(long)]
    pub no_standardize: bool,
    /// Hidden widths, e.g. `32,32`; `--hidden ""` for a linear model.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub activation: Option<String>,
    #[arg(long, value_enum)]
    pub optimizer: Option<Optimizer>,
    #[arg(long, allow_negative_numbers = true)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// none, fidelity, fidelity_1d or stability.
    #[arg(long)]
    pub regularizer: Option<String>,
    #[arg(long, allow_negative_numbers = true)]
    pub gamma: Option<f64>,
    /// Width of the regularizer's neighborhood.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_reg: Option<f64>,
    /// Neighbors per regularizer evaluation (0 = default for the kind).
    #[arg(long)]
    pub reg_samples: Option<usize>,
    /// Width of the evaluation neighborhood.
    #[arg(long, allow_negative_numbers = true)]
    pub sigma_eval: Option<f64>,
    /// Comma-separated: lime, taylor, saliency.
    #[arg(long, value_delimiter = ',')]
    pub explainers: Option<Vec<String>>,
    /// Evaluate only the first N test points.
    #[arg(long)]
    pub max_points: Option<usize>,
}

impl TrainArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        if let Some(path) = &self.config {
            return TrainConfig::load(path);
        }
        let mut cfg = match self.preset {
            Preset::Tabular => TrainConfig::tabular_default(),
            Preset::Image => TrainConfig::image_default(),
        };
        if let Some(kind) = self.data {
            cfg.data = match kind {
                DataKind::Piecewise => DataConfig::piecewise(200, 5, 1.0, 0),
                DataKind::Linear => DataConfig {
                    source: DataSource::Linear {
                        n: 200,
                        d: 5,
                        noise: 0.1,
                        seed: 0,
                    },
                    train_fraction: 0.8,
                    split_seed: 0,
                    standardize: true,
                },
                DataKind::Digits => DataConfig::digits(),
                DataKind::Csv => {
                    let path = self
                        .csv
                        .clone()
                        .ok_or_else(|| Error::Config("--data csv needs --csv PATH".into()))?;
                    let target = self
                        .target
                        .clone()
                        .ok_or_else(|| Error::Config("--data csv needs --target COLUMN".into()))?;
                    let target_column = match target.parse::<usize>() {
                        Ok(i) => i.into(),
                        Err(_) => target.as_str().into(),
                    };
                    let task = self.task.as_deref().unwrap_or("regression").parse::<Task>()?;
                    DataConfig {
                        source: DataSource::Csv {
                            path,
                            target_column,
                            task,
                        },
                        train_fraction: 0.8,
                        split_seed: 0,
                        standardize: true,
                    }
                }
            };
        }
        match &mut cfg.data.source {
            DataSource::Piecewise { n, d, noise, seed } | DataSource::Linear { n, d, noise, seed } => {
                *n = self.n.unwrap_or(*n);
                *d = self.d.unwrap_or(*d);
                *noise = self.noise.unwrap_or(*noise);
                *seed = self.data_seed.unwrap_or(*seed);
            }
            _ => {}
        }
        if let Some(f) = self.train_fraction {
            cfg.data.train_fraction = f;
        }
        if let Some(s) = self.split_seed {
            cfg.data.split_seed = s;
        }
        if self.no_standardize {
            cfg.data.standardize = false;
        }
        if let Some(h) = &self.hidden {
            cfg.hidden_sizes = h
                .split(',')
                .filter(|w| !w.trim().is_empty())
                .map(|w| {
                    w.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad hidden width `{w}`")))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(a) = &self.activation {
            cfg.activation = a.parse::<Activation>()?;
        }
        let lr = self.lr.unwrap_or(cfg.optimizer.learning_rate());
        cfg.optimizer = match self.optimizer {
            Some(Optimizer::Sgd) => OptimizerConfig::Sgd { learning_rate: lr },
            Some(Optimizer::Adam) => OptimizerConfig::Adam { learning_rate: lr },
            None => match cfg.optimizer {
                OptimizerConfig::Sgd { .. } => OptimizerConfig::Sgd { learning_rate: lr },
                OptimizerConfig::Adam { .. } => OptimizerConfig::Adam { learning_rate: lr },
            },
        };
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
            cfg.regularizer.neighborhood.seed = s;
            cfg.eval.neighborhood.seed = s;
        }
        if let Some(r) = &self.regularizer {
            cfg.regularizer.kind = r.parse::<RegularizerKind>()?;
        }
        if let Some(g) = self.gamma {
            cfg.regularizer.gamma = g;
        }
        if let Some(s) = self.sigma_reg {
            cfg.regularizer.neighborhood = cfg.regularizer.neighborhood.with_width(s);
        }
        if let Some(m) = self.reg_samples {
            cfg.regularizer.neighborhood.m = m;
        }
        if let Some(s) = self.sigma_eval {
            cfg.eval.neighborhood = cfg.eval.neighborhood.with_width(s);
        }
        if let Some(list) = &self.explainers {
            cfg.eval.explainers = list
                .iter()
                .map(|e| e.trim().parse::<ExplainerChoice>())
                .collect::<Result<_>>()?;
        }
        if self.max_points.is_some() {
            cfg.eval.max_points = self.max_points;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[arg(long, value_enum, default_value_t = ToyArg::Piecewise)]
    pub function: ToyArg,
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub anchor: f64,
    #[arg(long, default_value_t = 0.4, allow_negative_numbers = true)]
    pub second_anchor: f64,
    /// Radius of LIME's uniform sampling neighborhood.
    #[arg(long, default_value_t = 0.5, allow_negative_numbers = true)]
    pub radius: f64,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    /// Rows in demo.csv.
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ToyArg {
    Piecewise,
    Smooth,
    Affine,
}

impl From<ToyArg> for ToyFunction {
    fn from(t: ToyArg) -> Self {
        match t {
            ToyArg::Piecewise => ToyFunction::Piecewise,
            ToyArg::Smooth => ToyFunction::Smooth,
            ToyArg::Affine => ToyFunction::Affine,
        }
    }
}
