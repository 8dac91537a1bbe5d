//! Experiment harness: training with an explanation regularizer, evaluation,
//! hyperparameter sweeps and the canned demos.

mod config;
mod demo;
mod evaluate;
mod image;
mod sweep;
mod train;

use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    BoundConfig, DataConfig, DataSource, EvalConfig, ExplainerChoice, OptimizerConfig, TrainConfig,
};
pub use demo::{demo_toy, DemoConfig, DemoReport, DemoRow, ToyFunction};
pub use evaluate::{bounds, evaluate, performance};
pub use image::{stability_image_experiment, ImageReport, SaliencyExample};
pub use sweep::{frontier_csv, sweep, SweepAxis, SweepPoint};
pub use train::{
    argmax, batch_gradient, mean_regularizer_loss, predictive_loss, softmax, train_model, EpochLog, TrainingLog,
};

use crate::bounds::BoundReport;
use crate::data::{Dataset, DatasetSummary, SplitSpec, Task};
use crate::error::Result;
use crate::metrics::{MetricsReport, Performance};
use crate::model::MlpModel;

/// Stable identifier of a configuration: the first 16 hex digits of the
/// SHA-256 of its JSON form.
pub fn run_id(cfg: &TrainConfig) -> String {
    let json = serde_json::to_string(cfg).expect("config serializes");
    Sha256::digest(json.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub run_id: String,
    pub config: TrainConfig,
    pub train_data: DatasetSummary,
    pub test_data: DatasetSummary,
    pub train_performance: Performance,
    pub metrics: MetricsReport,
    pub bounds: Vec<BoundReport>,
    pub training: TrainingLog,
    /// Mean regularizer value of the final model over the training set.
    pub final_regularizer_loss: Option<f64>,
    pub wall_clock_seconds: f64,
}

/// A trained model together with its report.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub model: MlpModel,
    pub report: ExperimentReport,
}

/// Trains on `train` and evaluates on `test`.
pub fn run_on(cfg: &TrainConfig, train: &Dataset, test: &Dataset) -> Result<Experiment> {
    let start = Instant::now();
    let (model, training) = train_model(cfg, train)?;
    let label = if cfg.regularizer.is_inactive() {
        "none"
    } else {
        cfg.regularizer.kind.label()
    };
    let metrics = evaluate(&model, test, &cfg.eval, label)?;
    let bound_reports = bounds(&model, train, &cfg.eval)?;
    let final_regularizer_loss = if cfg.regularizer.is_inactive() {
        None
    } else {
        Some(mean_regularizer_loss(&model, train, &cfg.regularizer, u64::MAX)?)
    };
    let report = ExperimentReport {
        run_id: run_id(cfg),
        config: cfg.clone(),
        train_data: train.summary(),
        test_data: test.summary(),
        train_performance: performance(&model, train)?,
        metrics,
        bounds: bound_reports,
        training,
        final_regularizer_loss,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    Ok(Experiment { model, report })
}

/// Loads the configured data, trains and evaluates.
pub fn run_experiment(cfg: &TrainConfig) -> Result<Experiment> {
    cfg.validate()?;
    let (train, test) = cfg.data.prepare()?;
    run_on(cfg, &train, &test)
}

/// Acceptable loss of predictive performance when trading it for explanation quality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerance {
    /// Allowed relative MSE increase (0.1 = 10%).
    pub relative_mse: f64,
    /// Allowed absolute accuracy drop (0.01 = 1 point).
    pub accuracy_drop: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            relative_mse: 0.1,
            accuracy_drop: 0.01,
        }
    }
}

impl Tolerance {
    pub fn accepts(&self, baseline: &Performance, candidate: &Performance) -> bool {
        match baseline.metric.as_str() {
            "accuracy" => candidate.value >= baseline.value - self.accuracy_drop,
            _ => candidate.value <= baseline.value * (1.0 + self.relative_mse),
        }
    }
}

/// The explanation-quality number a run is judged by: LIME neighborhood
/// fidelity when LIME is evaluated, otherwise the first stability row.
pub fn headline_metric(report: &MetricsReport) -> Option<(String, f64)> {
    for key in ["LIME-NF", "Taylor-NF", "Saliency-S", "LIME-S", "Taylor-S"] {
        if let Some(v) = report.mean_over_outputs(key) {
            return Some((key.to_string(), v));
        }
    }
    None
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCandidate {
    pub gamma: f64,
    pub validation_performance: Performance,
    pub validation_metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaTuning {
    pub metric: String,
    pub baseline_performance: Performance,
    pub baseline_metric: f64,
    pub candidates: Vec<GammaCandidate>,
    pub chosen_gamma: f64,
}

/// Picks gamma on a validation split carved from `train`: the candidate with
/// the best headline metric among those within `tolerance` of the
/// unregularized validation performance (or the best-performing one if none is).
pub fn tune_gamma(cfg: &TrainConfig, train: &Dataset, gammas: &[f64], tolerance: Tolerance) -> Result<GammaTuning> {
    let spec = SplitSpec {
        train_fraction: 0.8,
        seed: cfg.data.split_seed.wrapping_add(1),
    };
    let (fit_idx, val_idx) = spec.indices(train.len())?;
    let (fit, val) = (train.select(&fit_idx), train.select(&val_idx));
    let base = run_on(&cfg.unregularized(), &fit, &val)?.report.metrics;
    let (metric, baseline_metric) =
        headline_metric(&base).ok_or_else(|| crate::Error::Config("no explanation metric to tune on".into()))?;
    let mut candidates = Vec::new();
    for &gamma in gammas {
        let mut c = cfg.clone();
        c.regularizer.gamma = gamma;
        let m = run_on(&c, &fit, &val)?.report.metrics;
        candidates.push(GammaCandidate {
            gamma,
            validation_metric: m.mean_over_outputs(&metric).unwrap_or(f64::INFINITY),
            validation_performance: m.performance,
        });
    }
    let better_perf = |a: &GammaCandidate, b: &GammaCandidate| match base.performance.metric.as_str() {
        "accuracy" => a.validation_performance.value > b.validation_performance.value,
        _ => a.validation_performance.value < b.validation_performance.value,
    };
    let mut chosen: Option<&GammaCandidate> = None;
    for c in candidates.iter().filter(|c| tolerance.accepts(&base.performance, &c.validation_performance)) {
        if chosen.is_none_or(|b| c.validation_metric < b.validation_metric) {
            chosen = Some(c);
        }
    }
    if chosen.is_none() {
        for c in &candidates {
            if chosen.is_none_or(|b| better_perf(c, b)) {
                chosen = Some(c);
            }
        }
    }
    Ok(GammaTuning {
        metric,
        chosen_gamma: chosen.map_or(0.0, |c| c.gamma),
        baseline_performance: base.performance,
        baseline_metric,
        candidates,
    })
}

/// A regularized run and its unregularized twin on the same split and seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedReport {
    pub tuning: Option<GammaTuning>,
    pub baseline: ExperimentReport,
    pub regularized: ExperimentReport,
}

impl PairedReport {
    /// Regularized over baseline value of a metric (mean over outputs).
    pub fn ratio(&self, metric: &str) -> Option<f64> {
        Some(self.regularized.metrics.mean_over_outputs(metric)? / self.baseline.metrics.mean_over_outputs(metric)?)
    }
}

/// Trains `cfg` and its unregularized twin. With `gammas`, gamma is first
/// chosen by [`tune_gamma`] on a validation split of the training data; both
/// final models are then trained on the full training split.
pub fn paired_run(cfg: &TrainConfig, gammas: Option<&[f64]>, tolerance: Tolerance) -> Result<PairedReport> {
    cfg.validate()?;
    let (train, test) = cfg.data.prepare()?;
    let mut cfg = cfg.clone();
    let tuning = match gammas {
        Some(g) => {
            let t = tune_gamma(&cfg, &train, g, tolerance)?;
            cfg.regularizer.gamma = t.chosen_gamma;
            Some(t)
        }
        None => None,
    };
    let baseline = run_on(&cfg.unregularized(), &train, &test)?.report;
    let regularized = run_on(&cfg, &train, &test)?.report;
    Ok(PairedReport {
        tuning,
        baseline,
        regularized,
    })
}

/// Default evaluation set-up for a task.
pub fn default_eval(task: Task) -> EvalConfig {
    match task {
        Task::Regression => EvalConfig::tabular(),
        Task::Classification => EvalConfig::images(),
    }
}
