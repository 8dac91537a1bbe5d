use super::config::{EvalConfig, ExplainerChoice};
use super::train::argmax;
use crate::bounds::{bound_report, BoundReport};
use crate::data::{Dataset, Targets};
use crate::error::Result;
use crate::explainers::Explainer;
use crate::metrics::{
    neighborhood_fidelity_on_points, point_fidelity, stability_on_points, MetricRow, MetricsReport, Performance,
    Summary,
};
use crate::model::MlpModel;
use crate::neighborhood::substream;

/// MSE for regression, accuracy for classification.
pub fn performance(model: &MlpModel, data: &Dataset) -> Result<Performance> {
    match &data.targets {
        Targets::Regression(y) => {
            let mut total = 0.0;
            for (i, t) in y.iter().enumerate() {
                let r = model.forward(data.point(i))?[0] - t;
                total += r * r;
            }
            Ok(Performance {
                metric: "mse".into(),
                value: total / y.len() as f64,
            })
        }
        Targets::Classification { labels, .. } => {
            let mut hits = 0usize;
            for (i, &l) in labels.iter().enumerate() {
                if argmax(&model.forward(data.point(i))?) == l {
                    hits += 1;
                }
            }
            Ok(Performance {
                metric: "accuracy".into(),
                value: hits as f64 / labels.len() as f64,
            })
        }
    }
}

// Disjoint counter namespaces per point and output.
const LIME_DRAW: u64 = 1;
const NF_DRAW: u64 = 2;
const STABILITY_DRAW: u64 = 3;

struct Accumulator {
    metric: String,
    explainer: String,
    output: String,
    values: Vec<f64>,
}

impl Accumulator {
    fn new(explainer: &Explainer, suffix: &str, output: String) -> Self {
        Self {
            metric: format!("{}-{suffix}", explainer.label()),
            explainer: explainer.label().to_string(),
            output,
            values: Vec::new(),
        }
    }

    fn finish(self) -> MetricRow {
        MetricRow {
            summary: Summary::of(&self.values),
            metric: self.metric,
            explainer: self.explainer,
            output: self.output,
            values: self.values,
        }
    }
}

/// Explanation-quality metrics of `model` over the test points.
///
/// Local-linear explainers get PF, NF and S for every output; saliency gets S
/// for the predicted class.
pub fn evaluate(model: &MlpModel, test: &Dataset, eval: &EvalConfig, regularizer: &str) -> Result<MetricsReport> {
    let n = eval.max_points.map_or(test.len(), |m| m.min(test.len()));
    let outputs = model.layer_sizes().last().copied().unwrap_or(1);
    let output_name = |o: usize| match test.targets {
        Targets::Regression(_) => "y".to_string(),
        Targets::Classification { .. } => o.to_string(),
    };
    let nf_spec = eval.neighborhood;
    let stab_spec = eval.neighborhood.with_m(eval.stability_samples);
    let mut rows = Vec::new();
    for &choice in &eval.explainers {
        let explainer = eval.explainer(choice);
        if choice == ExplainerChoice::Saliency {
            let mut s = Accumulator::new(&explainer, "S", "predicted".into());
            for i in 0..n {
                let x = test.point(i);
                let class = argmax(&model.forward(x)?);
                let base = substream(i as u64, u64::MAX);
                let pts = stab_spec.sample(x, substream(base, STABILITY_DRAW))?;
                s.values.push(stability_on_points(model, &explainer, x, class, &pts, base)?);
            }
            rows.push(s.finish());
            continue;
        }
        for o in 0..outputs {
            let mut pf = Accumulator::new(&explainer, "PF", output_name(o));
            let mut nf = Accumulator::new(&explainer, "NF", output_name(o));
            let mut st = Accumulator::new(&explainer, "S", output_name(o));
            for i in 0..n {
                let x = test.point(i);
                let base = substream(i as u64, o as u64);
                let e = explainer.explain(model, x, o, substream(base, LIME_DRAW))?;
                pf.values.push(point_fidelity(model, &e, x)?);
                let pts = nf_spec.sample(x, substream(base, NF_DRAW))?;
                nf.values.push(neighborhood_fidelity_on_points(model, &e, &pts)?);
                let pts = stab_spec.sample(x, substream(base, STABILITY_DRAW))?;
                st.values.push(stability_on_points(model, &explainer, x, o, &pts, base)?);
            }
            rows.extend([pf.finish(), nf.finish(), st.finish()]);
        }
    }
    Ok(MetricsReport {
        regularizer: regularizer.to_string(),
        performance: performance(model, test)?,
        rows,
    })
}

/// Generalization bounds on local residuals, one per output, over training points.
pub fn bounds(model: &MlpModel, train: &Dataset, eval: &EvalConfig) -> Result<Vec<BoundReport>> {
    let Some(cfg) = eval.bound else {
        return Ok(Vec::new());
    };
    let n = cfg.max_points.map_or(train.len(), |m| m.min(train.len()));
    let points = train.head(n).features;
    let outputs = model.layer_sizes().last().copied().unwrap_or(1);
    (0..outputs)
        .map(|o| {
            bound_report(
                model,
                &points,
                &eval.neighborhood,
                cfg.mc_samples,
                cfg.delta,
                o,
                substream(0xB0B0, o as u64),
            )
        })
        .collect()
}
