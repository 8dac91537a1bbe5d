use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{OptimizerConfig, TrainConfig};
use crate::data::{Dataset, Targets};
use crate::error::{Error, Result};
use crate::model::{AdamState, GradientTape, MlpModel};
use crate::neighborhood::substream;
use crate::linalg::Matrix;
use crate::regularizers::{regularizer_backprop, regularizer_loss, RegularizerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean predictive loss over the epoch's examples.
    pub predictive_loss: f64,
    /// Mean regularizer value (before gamma); 0 when inactive.
    pub regularizer_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
}

impl TrainingLog {
    pub fn last(&self) -> Option<&EpochLog> {
        self.epochs.last()
    }
}

/// Loss of one prediction and its gradient with respect to the outputs.
///
/// Regression uses squared error; classification uses softmax cross-entropy.
pub fn predictive_loss(targets: &Targets, index: usize, output: &[f64]) -> (f64, Vec<f64>) {
    match targets {
        Targets::Regression(y) => {
            let r = output[0] - y[index];
            (r * r, vec![2.0 * r])
        }
        Targets::Classification { labels, .. } => {
            let label = labels[index];
            let probs = softmax(output);
            let loss = -probs[label].max(f64::MIN_POSITIVE).ln();
            let mut grad = probs;
            grad[label] -= 1.0;
            (loss, grad)
        }
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut p: Vec<f64> = z.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= s);
    p
}

pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in z.iter().enumerate() {
        if *v > z[best] {
            best = i;
        }
    }
    best
}

fn layer_sizes(cfg: &TrainConfig, train: &Dataset) -> Vec<usize> {
    let mut sizes = vec![train.dim()];
    sizes.extend_from_slice(&cfg.hidden_sizes);
    sizes.push(train.output_dim());
    sizes
}

/// Gradient of the batch objective: mean over the batch of the predictive
/// loss plus `gamma` times the regularizer. Returns the tape and the summed
/// (predictive, regularizer) losses.
pub fn batch_gradient(
    model: &MlpModel,
    data: &Dataset,
    batch: &[usize],
    regularizer: &RegularizerConfig,
    counter: u64,
) -> Result<(GradientTape, f64, f64)> {
    let mut tape = GradientTape::zeros_like(model);
    let scale = 1.0 / batch.len() as f64;
    let points = data.features.select_rows(batch);
    let trace = model.forward_batch(&points)?;
    let outputs = trace.outputs();
    let mut upstream = Matrix::zeros(outputs.rows(), outputs.cols());
    let mut pred_total = 0.0;
    for (k, &i) in batch.iter().enumerate() {
        let (loss, grad) = predictive_loss(&data.targets, i, outputs.row(k));
        pred_total += loss;
        upstream.row_mut(k).copy_from_slice(&grad);
    }
    model.backward_batch(&trace, &upstream, scale, &mut tape)?;
    let mut reg_total = 0.0;
    if !regularizer.is_inactive() {
        for (k, &i) in batch.iter().enumerate() {
            let c = substream(counter, k as u64);
            reg_total += regularizer_backprop(model, data.point(i), regularizer, c, regularizer.gamma * scale, &mut tape)?;
        }
    }
    Ok((tape, pred_total, reg_total))
}

/// Mini-batch training of a fresh model on `train`.
pub fn train_model(cfg: &TrainConfig, train: &Dataset) -> Result<(MlpModel, TrainingLog)> {
    cfg.validate()?;
    let mut model = MlpModel::init(&layer_sizes(cfg, train), cfg.activation, cfg.seed)?;
    let regularizer = cfg.regularizer.resolved(train.dim());
    let mut adam = AdamState::new(&model);
    let adam_cfg = cfg.optimizer.adam();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut log = TrainingLog::default();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut pred_sum, mut reg_sum) = (0.0, 0.0);
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let counter = substream(epoch as u64, b as u64);
            let (tape, p, r) = batch_gradient(&model, train, batch, &regularizer, counter)?;
            let step_loss = (p + regularizer.gamma * r) / batch.len() as f64;
            if !step_loss.is_finite() || !tape.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step: b,
                    value: step_loss,
                });
            }
            match cfg.optimizer {
                OptimizerConfig::Sgd { learning_rate } => model.sgd_step(&tape, learning_rate)?,
                OptimizerConfig::Adam { .. } => model.adam_step(&tape, &mut adam, &adam_cfg)?,
            }
            pred_sum += p;
            reg_sum += r;
            log.steps += 1;
        }
        let n = train.len() as f64;
        log.epochs.push(EpochLog {
            epoch,
            predictive_loss: pred_sum / n,
            regularizer_loss: reg_sum / n,
        });
    }
    Ok((model, log))
}

/// Mean regularizer value of a trained model over a dataset.
pub fn mean_regularizer_loss(
    model: &MlpModel,
    data: &Dataset,
    regularizer: &RegularizerConfig,
    counter: u64,
) -> Result<f64> {
    let regularizer = regularizer.resolved(data.dim());
    let mut total = 0.0;
    for i in 0..data.len() {
        if let Some(r) = regularizer_loss(model, data.point(i), &regularizer, substream(counter, i as u64))? {
            total += r.loss;
        }
    }
    Ok(total / data.len() as f64)
}
