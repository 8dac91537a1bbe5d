mod common;

use common::*;
use expo_core::data::Targets;
use expo_core::harness::{batch_gradient, predictive_loss};
use expo_core::neighborhood::substream;
use expo_core::regularizers::regularizer_loss;
use expo_core::{Dataset, MlpModel, NeighborhoodSpec, RegularizerConfig, RegularizerKind};
use rand::Rng;

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-4;
// guards the ratio for entries that are zero up to rounding
const FLOOR: f64 = 1e-6;

fn with_params(model: &MlpModel, p: &[f64]) -> MlpModel {
    let mut m = model.clone();
    m.set_parameters(p).unwrap();
    m
}

/// The batch objective recomputed from plain forward passes and the generic
/// penalty path.
fn objective(model: &MlpModel, data: &Dataset, batch: &[usize], reg: &RegularizerConfig, counter: u64) -> f64 {
    let mut total = 0.0;
    for (k, &i) in batch.iter().enumerate() {
        let out = model.forward(data.point(i)).unwrap();
        total += predictive_loss(&data.targets, i, &out).0;
        if let Some(r) = regularizer_loss(model, data.point(i), reg, substream(counter, k as u64)).unwrap() {
            total += reg.gamma * r.loss;
        }
    }
    total / batch.len() as f64
}

fn check_objective(kind: RegularizerKind, neighborhood: NeighborhoodSpec, classification: bool) {
    for seed in 0..10u64 {
        let mut r = rng(seed * 31 + kind as u64);
        let d = r.random_range(1..=5);
        let outputs = if classification { 3 } else { 1 };
        let model = random_tanh_model(&mut r, d, outputs);
        let n = 4;
        let features = random_matrix(&mut r, n, d);
        let targets = if classification {
            Targets::Classification {
                labels: (0..n).map(|_| r.random_range(0..3)).collect(),
                classes: 3,
            }
        } else {
            Targets::Regression(random_vec(&mut r, n))
        };
        let data = Dataset::new(features, targets).unwrap();
        let reg = RegularizerConfig::new(kind, 0.7, neighborhood.with_m(0)).resolved(d);
        let batch: Vec<usize> = (0..n).collect();
        let counter = 40 + seed;
        let (tape, _, _) = batch_gradient(&model, &data, &batch, &reg, counter).unwrap();
        let analytic = tape.flatten();
        let numeric = finite_differences(&model.parameters(), STEP, |p| {
            objective(&with_params(&model, p), &data, &batch, &reg, counter)
        });
        let worst = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| relative_error(*a, *b, FLOOR))
            .fold(0.0, f64::max);
        assert!(worst < TOL, "{kind:?} seed {seed}: max relative error {worst:e}");
    }
}

#[test]
fn mse_plus_fidelity() {
    check_objective(RegularizerKind::Fidelity, NeighborhoodSpec::gaussian(0.5, 0, 1), false);
}

#[test]
fn mse_plus_fidelity_1d() {
    check_objective(RegularizerKind::Fidelity1d, NeighborhoodSpec::gaussian(0.5, 6, 2), false);
}

#[test]
fn mse_plus_stability() {
    check_objective(RegularizerKind::Stability, NeighborhoodSpec::uniform(0.3, 0, 3), false);
}

#[test]
fn cross_entropy_plus_stability() {
    check_objective(RegularizerKind::Stability, NeighborhoodSpec::uniform(0.3, 0, 4), true);
}

#[test]
fn cross_entropy_plus_fidelity() {
    check_objective(RegularizerKind::Fidelity, NeighborhoodSpec::gaussian(0.5, 0, 5), true);
}

#[test]
fn backward_matches_finite_differences() {
    for seed in 0..10 {
        let mut r = rng(500 + seed);
        let d = r.random_range(1..=5);
        let model = random_tanh_model(&mut r, d, 2);
        let x = random_vec(&mut r, d);
        let upstream = random_vec(&mut r, 2);
        let tape = model.backward(&x, &upstream).unwrap();
        let numeric = finite_differences(&model.parameters(), STEP, |p| {
            let y = with_params(&model, p).forward(&x).unwrap();
            y.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        });
        for (a, b) in tape.flatten().iter().zip(&numeric) {
            assert!(relative_error(*a, *b, FLOOR) < TOL, "seed {seed}: {a} vs {b}");
        }
        let numeric_x = finite_differences(&x, STEP, |v| {
            let y = model.forward(v).unwrap();
            y.iter().zip(&upstream).map(|(a, b)| a * b).sum()
        });
        for (a, b) in tape.input_gradient.iter().zip(&numeric_x) {
            assert!(relative_error(*a, *b, FLOOR) < TOL);
        }
    }
}

#[test]
fn saliency_matches_finite_differences() {
    for seed in 0..10 {
        let mut r = rng(900 + seed);
        let d = r.random_range(1..=6);
        let model = random_tanh_model(&mut r, d, 3);
        let x = random_vec(&mut r, d);
        for class in 0..3 {
            let s = model.saliency(&x, class).unwrap();
            let numeric = finite_differences(&x, STEP, |v| model.forward(v).unwrap()[class]);
            for (a, b) in s.iter().zip(&numeric) {
                assert!(relative_error(*a, *b, FLOOR) < TOL, "seed {seed} class {class}");
            }
        }
    }
}

#[test]
fn relu_backward_away_from_kinks() {
    let mut r = rng(3);
    let mut model = MlpModel::init(&[3, 8, 2], expo_core::Activation::Relu, 11).unwrap();
    let p: Vec<f64> = model.parameters().iter().map(|v| v + r.random_range(-0.2..0.2)).collect();
    model.set_parameters(&p).unwrap();
    let x = [0.3, -0.7, 0.5];
    let tape = model.backward(&x, &[1.0, -0.5]).unwrap();
    let numeric = finite_differences(&model.parameters(), STEP, |p| {
        let y = with_params(&model, p).forward(&x).unwrap();
        y[0] - 0.5 * y[1]
    });
    for (a, b) in tape.flatten().iter().zip(&numeric) {
        assert!((a - b).abs() < 1e-6);
    }
}
