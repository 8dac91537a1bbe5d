use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::{DataConfig, DataSource, EvalConfig, OptimizerConfig, TrainConfig};
use super::train::train_model;
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::explainers::{lime_explain, taylor_explain, Explanation};
use crate::linalg::Matrix;
use crate::model::{Activation, MlpModel};
use crate::neighborhood::NeighborhoodSpec;
use crate::regularizers::RegularizerConfig;

/// One-dimensional targets on `[0, 1]` for the toy comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToyFunction {
    /// Flat, then a steep ramp between 0.45 and 0.65, then flat again.
    Piecewise,
    Smooth,
    Affine,
}

impl ToyFunction {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ToyFunction::Piecewise => {
                if x < 0.45 {
                    0.2 * x
                } else if x < 0.65 {
                    0.09 + 3.0 * (x - 0.45)
                } else {
                    0.69
                }
            }
            ToyFunction::Smooth => 0.5 * (2.0 * std::f64::consts::PI * x).sin() + x,
            ToyFunction::Affine => 1.5 * x - 0.3,
        }
    }
}

impl std::str::FromStr for ToyFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "piecewise" => Ok(ToyFunction::Piecewise),
            "smooth" => Ok(ToyFunction::Smooth),
            "affine" => Ok(ToyFunction::Affine),
            _ => Err(Error::Config(format!("unknown toy function `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub function: ToyFunction,
    pub anchor: f64,
    /// A nearby anchor where the gradient is read a second time.
    pub second_anchor: f64,
    /// LIME's sampling neighborhood.
    pub neighborhood: NeighborhoodSpec,
    pub lime_ridge: f64,
    /// Points in the output grid over `[0, 1]`.
    pub grid: usize,
    pub train_points: usize,
    /// `None` picks `[]` for the affine target (an exact linear model) and
    /// `[32, 32]` otherwise.
    pub hidden_sizes: Option<Vec<usize>>,
    pub epochs: usize,
    pub seed: u64,
}

impl DemoConfig {
    pub fn new(function: ToyFunction) -> Self {
        Self {
            function,
            anchor: 0.5,
            second_anchor: 0.4,
            neighborhood: NeighborhoodSpec::uniform(0.5, 200, 0),
            lime_ridge: 1e-6,
            grid: 101,
            train_points: 200,
            hidden_sizes: None,
            epochs: 300,
            seed: 0,
        }
    }

    fn train_config(&self) -> TrainConfig {
        let hidden = self.hidden_sizes.clone().unwrap_or_else(|| match self.function {
            ToyFunction::Affine => Vec::new(),
            _ => vec![32, 32],
        });
        // The data section is unused: training points are generated in `demo_toy`.
        TrainConfig {
            data: DataConfig {
                source: DataSource::Digits,
                train_fraction: 0.8,
                split_seed: 0,
                standardize: false,
            },
            hidden_sizes: hidden,
            activation: Activation::Tanh,
            optimizer: OptimizerConfig::Adam { learning_rate: 0.01 },
            epochs: self.epochs,
            batch_size: 16,
            seed: self.seed,
            regularizer: RegularizerConfig::none(),
            eval: EvalConfig::tabular(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoRow {
    pub x: f64,
    pub f: f64,
    pub taylor1: f64,
    pub taylor2: f64,
    pub lime: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoReport {
    pub config: DemoConfig,
    /// Mean squared error of the model against the target on the grid.
    pub fit_mse: f64,
    pub taylor_anchor: Explanation,
    pub taylor_second: Explanation,
    pub lime: Explanation,
    pub rows: Vec<DemoRow>,
}

impl DemoReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,f,taylor1,taylor2,lime\n");
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{},{},{}", r.x, r.f, r.taylor1, r.taylor2, r.lime);
        }
        out
    }
}

fn grid(n: usize) -> impl Iterator<Item = f64> {
    let step = 1.0 / (n.max(2) - 1) as f64;
    (0..n.max(2)).map(move |i| i as f64 * step)
}

/// Fits a small network to a 1-D toy function and compares gradient and
/// neighborhood-based explanations of it.
pub fn demo_toy(cfg: &DemoConfig) -> Result<(MlpModel, DemoReport)> {
    cfg.neighborhood.validate()?;
    if cfg.train_points < 2 {
        return Err(Error::Config("the toy demo needs at least 2 training points".into()));
    }
    let xs: Vec<f64> = grid(cfg.train_points).collect();
    let ys = xs.iter().map(|&x| cfg.function.eval(x)).collect();
    let data = Dataset::new(Matrix::from_vec(xs.len(), 1, xs)?, Targets::Regression(ys))?;
    let (model, _) = train_model(&cfg.train_config(), &data)?;
    let taylor_anchor = taylor_explain(&model, &[cfg.anchor], 0)?;
    let taylor_second = taylor_explain(&model, &[cfg.second_anchor], 0)?;
    let lime = lime_explain(&model, &[cfg.anchor], &cfg.neighborhood, cfg.lime_ridge, 0, cfg.seed)?;
    let mut rows = Vec::new();
    let mut sq = 0.0;
    for x in grid(cfg.grid) {
        let f = model.forward(&[x])?[0];
        sq += (f - cfg.function.eval(x)).powi(2);
        rows.push(DemoRow {
            x,
            f,
            taylor1: taylor_anchor.evaluate(&[x])?,
            taylor2: taylor_second.evaluate(&[x])?,
            lime: lime.evaluate(&[x])?,
        });
    }
    let report = DemoReport {
        config: cfg.clone(),
        fit_mse: sq / rows.len() as f64,
        taylor_anchor,
        taylor_second,
        lime,
        rows,
    };
    Ok((model, report))
}
