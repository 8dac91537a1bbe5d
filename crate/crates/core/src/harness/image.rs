use serde::{Deserialize, Serialize};

use super::config::{DataConfig, EvalConfig, OptimizerConfig, TrainConfig};
use super::train::argmax;
use super::{run_on, ExperimentReport};
use crate::data::Targets;
use crate::error::{Error, Result};
use crate::model::Activation;
use crate::neighborhood::NeighborhoodSpec;
use crate::regularizers::{RegularizerConfig, RegularizerKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyExample {
    pub test_index: usize,
    pub label: usize,
    pub baseline_class: usize,
    pub baseline_saliency: Vec<f64>,
    pub regularized_class: usize,
    pub regularized_saliency: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageReport {
    pub baseline: ExperimentReport,
    pub regularized: ExperimentReport,
    pub examples: Vec<SaliencyExample>,
}

impl ImageReport {
    pub fn accuracy_drop(&self) -> f64 {
        self.baseline.metrics.performance.value - self.regularized.metrics.performance.value
    }

    /// Regularized over unregularized saliency stability.
    pub fn stability_ratio(&self) -> Option<f64> {
        let b = self.baseline.metrics.mean_over_outputs("Saliency-S")?;
        let r = self.regularized.metrics.mean_over_outputs("Saliency-S")?;
        Some(r / b)
    }
}

impl TrainConfig {
    /// Digits with output-stability regularization in a +-0.05 pixel box.
    pub fn image_default() -> Self {
        let mut eval = EvalConfig::images();
        eval.max_points = Some(200);
        Self {
            data: DataConfig::digits(),
            hidden_sizes: vec![64],
            activation: Activation::Relu,
            optimizer: OptimizerConfig::Adam { learning_rate: 3e-3 },
            epochs: 100,
            batch_size: 32,
            seed: 0,
            regularizer: RegularizerConfig::new(
                RegularizerKind::Stability,
                3.0,
                NeighborhoodSpec::uniform(0.05, 5, 0),
            ),
            eval,
        }
    }
}

/// Trains the unregularized and regularized twins of `cfg` on the same split
/// and compares accuracy and saliency stability. `examples` test images get
/// their saliency maps from both models recorded.
pub fn stability_image_experiment(cfg: &TrainConfig, examples: usize) -> Result<ImageReport> {
    cfg.validate()?;
    if cfg.regularizer.is_inactive() {
        return Err(Error::Config("the image experiment needs an active regularizer".into()));
    }
    let (train, test) = cfg.data.prepare()?;
    if !matches!(test.targets, Targets::Classification { .. }) {
        return Err(Error::Config("the image experiment needs a classification dataset".into()));
    }
    let base = run_on(&cfg.unregularized(), &train, &test)?;
    let reg = run_on(cfg, &train, &test)?;
    let Targets::Classification { labels, .. } = &test.targets else {
        unreachable!()
    };
    let mut out = Vec::new();
    for (i, &label) in labels.iter().enumerate().take(examples) {
        let x = test.point(i);
        let bc = argmax(&base.model.forward(x)?);
        let rc = argmax(&reg.model.forward(x)?);
        out.push(SaliencyExample {
            test_index: i,
            label,
            baseline_class: bc,
            baseline_saliency: base.model.saliency(x, bc)?,
            regularized_class: rc,
            regularized_saliency: reg.model.saliency(x, rc)?,
        });
    }
    Ok(ImageReport {
        baseline: base.report,
        regularized: reg.report,
        examples: out,
    })
}
