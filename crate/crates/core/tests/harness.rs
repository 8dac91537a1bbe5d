use expo_core::data::{builtin, Targets};
use expo_core::explainers::lime_explain;
use expo_core::harness::{
    demo_toy, evaluate, frontier_csv, performance, run_experiment, run_on, stability_image_experiment, sweep,
    train_model, DataConfig, DataSource, DemoConfig, EvalConfig, ExplainerChoice, SweepAxis, ToyFunction,
    TrainConfig,
};
use expo_core::linalg::Matrix;
use expo_core::model::Layer;
use expo_core::{Activation, Dataset, MlpModel, NeighborhoodSpec, RegularizerKind};

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn slope(e: &expo_core::Explanation) -> f64 {
    e.as_vector()[1]
}

/// A quick regression config for plumbing tests.
fn small(seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::tabular_default();
    cfg.data = DataConfig::piecewise(80, 3, 0.5, seed);
    cfg.data.split_seed = seed;
    cfg.hidden_sizes = vec![8];
    cfg.epochs = 20;
    cfg.seed = seed;
    cfg.eval.max_points = Some(10);
    cfg.eval.explainers = vec![ExplainerChoice::Lime, ExplainerChoice::Taylor];
    cfg
}

fn without_clock(mut r: expo_core::harness::ExperimentReport) -> expo_core::harness::ExperimentReport {
    r.wall_clock_seconds = 0.0;
    r
}

#[test]
fn zero_gamma_is_plain_training() {
    let mut cfg = small(3);
    cfg.regularizer.gamma = 0.0;
    let (train, _) = cfg.data.prepare().unwrap();
    let (a, log_a) = train_model(&cfg, &train).unwrap();
    let (b, log_b) = train_model(&cfg.unregularized(), &train).unwrap();
    assert_eq!(a, b);
    assert_eq!(log_a, log_b);
    for kind in [RegularizerKind::Fidelity1d, RegularizerKind::Stability] {
        cfg.regularizer.kind = kind;
        assert_eq!(train_model(&cfg, &train).unwrap().0, b);
    }
}

#[test]
fn runs_are_reproducible() {
    let mut cfg = small(4);
    cfg.eval.bound = Some(expo_core::harness::BoundConfig {
        delta: 0.05,
        mc_samples: 50,
        max_points: Some(20),
    });
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.report.metrics.to_csv(), b.report.metrics.to_csv());
    assert_eq!(
        serde_json::to_string(&without_clock(a.report)).unwrap(),
        serde_json::to_string(&without_clock(b.report)).unwrap()
    );
}

fn linear_config(noise: f64, gamma: f64) -> TrainConfig {
    let mut cfg = TrainConfig::tabular_default();
    cfg.data.source = DataSource::Linear {
        n: 200,
        d: 3,
        noise,
        seed: 1,
    };
    cfg.regularizer.gamma = gamma;
    cfg.eval.max_points = Some(5);
    cfg
}

#[test]
fn fidelity_vanishes_on_linear_data() {
    let mut cfg = linear_config(0.0, 1.0);
    cfg.hidden_sizes = vec![8];
    cfg.activation = Activation::Relu;
    let exp = run_experiment(&cfg).unwrap();
    let fid = exp.report.final_regularizer_loss.unwrap();
    assert!(fid < 1e-4, "final fidelity {fid}");
}

#[test]
fn fidelity_shrinks_on_noisy_linear_data() {
    let mut cfg = linear_config(0.1, 1.0);
    cfg.epochs = 100;
    let (train, _) = cfg.data.prepare().unwrap();
    let probe = cfg.regularizer;
    let fid = |c: &TrainConfig| {
        let (model, _) = train_model(c, &train).unwrap();
        expo_core::harness::mean_regularizer_loss(&model, &train, &probe, 7).unwrap()
    };
    let (reg, base) = (fid(&cfg), fid(&cfg.unregularized()));
    assert!(reg < 0.5 * base, "{reg} vs {base}");
}

#[test]
fn fidelity_regularizer_lowers_nf_on_1d_piecewise_target() {
    let mut ratios = Vec::new();
    for seed in 0..5 {
        let mut cfg = TrainConfig::tabular_default();
        cfg.data = DataConfig::piecewise(200, 1, 0.3, seed);
        cfg.data.split_seed = seed;
        cfg.seed = seed;
        cfg.epochs = 150;
        cfg.regularizer.neighborhood.seed = seed;
        let (train, test) = cfg.data.prepare().unwrap();
        let reg = run_on(&cfg, &train, &test).unwrap().report.metrics;
        let base = run_on(&cfg.unregularized(), &train, &test).unwrap().report.metrics;
        ratios.push(reg.mean_over_outputs("LIME-NF").unwrap() / base.mean_over_outputs("LIME-NF").unwrap());
    }
    assert!(median(ratios.clone()) < 1.0, "{ratios:?}");
}

#[test]
fn perfect_and_affine_models() {
    let layer = Layer {
        weights: Matrix::from_rows(&[[0.5, -1.0, 2.0]]).unwrap(),
        biases: vec![0.25],
    };
    let model = MlpModel::from_layers(vec![layer], Activation::Tanh).unwrap();
    let ds = builtin::piecewise(30, 3, 0.0, 0);
    let y = (0..ds.len()).map(|i| model.forward(ds.point(i)).unwrap()[0]).collect();
    let own = Dataset::new(ds.features.clone(), Targets::Regression(y)).unwrap();
    assert_eq!(performance(&model, &own).unwrap().value, 0.0);

    let mut eval = EvalConfig::tabular();
    eval.lime_ridge = 0.0;
    eval.explainers = vec![ExplainerChoice::Lime, ExplainerChoice::Taylor];
    let report = evaluate(&model, &own, &eval, "none").unwrap();
    for row in &report.rows {
        assert!(row.summary.mean < 1e-8, "{} = {}", row.metric, row.summary.mean);
    }
}

#[test]
fn gamma_sweep_of_zero_is_the_unregularized_run() {
    let cfg = small(5);
    let points = sweep(&cfg, SweepAxis::Gamma, &[0.0]).unwrap();
    let (train, test) = cfg.data.prepare().unwrap();
    let plain = run_on(&cfg.unregularized(), &train, &test).unwrap().report.metrics;
    let swept = points[0].metrics.as_ref().unwrap();
    assert_eq!(swept.to_csv(), plain.to_csv());
    let csv = frontier_csv(&points);
    assert!(csv.starts_with("axis,value,status,"));
}

#[test]
fn sweep_records_failures_and_continues() {
    let cfg = small(6);
    let points = sweep(&cfg, SweepAxis::SigmaEval, &[-1.0, 0.2]).unwrap();
    assert!(points[0].error.is_some());
    assert!(points[1].metrics.is_some());
    assert!(frontier_csv(&points).contains("error"));
}

#[test]
fn demo_on_affine_target() {
    let mut cfg = DemoConfig::new(ToyFunction::Affine);
    cfg.grid = 37;
    let (_, report) = demo_toy(&cfg).unwrap();
    assert_eq!(report.rows.len(), 37);
    assert_eq!(report.to_csv().lines().count(), 38);
    for r in &report.rows {
        assert!((r.taylor1 - r.lime).abs() < 1e-3 && (r.taylor2 - r.lime).abs() < 1e-3, "{r:?}");
    }
}

#[test]
fn demo_kink_separates_taylor_lines() {
    let cfg = DemoConfig::new(ToyFunction::Piecewise);
    let (model, report) = demo_toy(&cfg).unwrap();
    assert_eq!(report.rows.len(), cfg.grid);
    let taylor_gap = (slope(&report.taylor_anchor) - slope(&report.taylor_second)).abs();
    let refit = lime_explain(&model, &[cfg.anchor], &cfg.neighborhood, cfg.lime_ridge, 0, cfg.seed + 1).unwrap();
    let lime_gap = (slope(&report.lime) - slope(&refit)).abs();
    assert!(taylor_gap > lime_gap, "taylor {taylor_gap} vs lime {lime_gap}");
}

#[test]
fn image_stability_is_monotone_in_gamma() {
    let mut cfg = TrainConfig::image_default();
    cfg.epochs = 40;
    cfg.eval.max_points = Some(100);
    let mut stability = Vec::new();
    let mut accuracy = Vec::new();
    for gamma in [0.0, 1.0, 100.0] {
        cfg.regularizer.gamma = gamma;
        let (train, test) = cfg.data.prepare().unwrap();
        let m = run_on(&cfg, &train, &test).unwrap().report.metrics;
        stability.push(m.mean_over_outputs("Saliency-S").unwrap());
        accuracy.push(m.performance.value);
    }
    assert!(stability[0] > stability[1] && stability[1] > stability[2], "{stability:?}");
    assert!(accuracy[2] < accuracy[0], "{accuracy:?}");
}

#[test]
fn image_experiment_needs_classification_and_regularizer() {
    let mut cfg = TrainConfig::image_default();
    cfg.regularizer.gamma = 0.0;
    assert!(stability_image_experiment(&cfg, 1).is_err());
    assert!(stability_image_experiment(&small(0), 1).is_err());
}

#[test]
fn training_fidelity_does_not_grow_with_gamma() {
    let gammas = [0.0, 0.01, 0.1, 1.0];
    let mut per_gamma = vec![Vec::new(); gammas.len()];
    for seed in 0..3 {
        let mut cfg = small(seed);
        cfg.epochs = 60;
        for (g, &gamma) in gammas.iter().enumerate() {
            let mut c = cfg.clone();
            c.regularizer.gamma = gamma;
            let (train, _) = c.data.prepare().unwrap();
            let (model, _) = train_model(&c, &train).unwrap();
            let mut probe = c.regularizer;
            probe.gamma = 1.0;
            per_gamma[g].push(expo_core::harness::mean_regularizer_loss(&model, &train, &probe, 99).unwrap());
        }
    }
    let medians: Vec<f64> = per_gamma.into_iter().map(median).collect();
    for w in medians.windows(2) {
        assert!(w[1] <= w[0], "{medians:?}");
    }
}

#[test]
fn config_json_round_trip() {
    for cfg in [TrainConfig::tabular_default(), TrainConfig::image_default()] {
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(TrainConfig::from_json(&text).unwrap(), cfg);
    }
    let mut bad = TrainConfig::tabular_default();
    bad.batch_size = 0;
    let err = TrainConfig::from_json(&serde_json::to_string(&bad).unwrap()).unwrap_err();
    assert_eq!(err.class(), expo_core::ErrorClass::Config);
    let spec = NeighborhoodSpec::gaussian(0.1, 5, 0);
    assert!(spec.validate().is_ok());
}
