//! Explanation-quality metrics, estimated by Monte Carlo over a neighborhood.
//!
//! * point fidelity: `(g(x) - f(x))^2` at the anchor;
//! * neighborhood fidelity: `E_{x'~N_x} (g(x') - f(x'))^2`;
//! * stability: `E_{x'~N_x} |e(x, f) - e(x', f)|^2`, re-running the explainer at
//!   every neighbor.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explainers::{Explainer, Explanation};
use crate::linalg::{squared_distance, Matrix};
use crate::model::{InputGradient, Predictor};
use crate::neighborhood::{substream, NeighborhoodSpec};

fn explained_output(model: &impl Predictor, expl: &Explanation, x: &[f64]) -> Result<f64> {
    let y = model.predict(x)?;
    y.get(expl.output_index).copied().ok_or_else(|| {
        Error::BadShape(format!(
            "explanation targets output {} of a model with {} outputs",
            expl.output_index,
            y.len()
        ))
    })
}

pub fn point_fidelity(model: &impl Predictor, expl: &Explanation, x: &[f64]) -> Result<f64> {
    let g = expl.evaluate(x)?;
    let f = explained_output(model, expl, x)?;
    Ok((g - f) * (g - f))
}

/// Mean squared gap between explanation and model over the given neighbors.
pub fn neighborhood_fidelity_on_points(model: &impl Predictor, expl: &Explanation, points: &Matrix) -> Result<f64> {
    let mut total = 0.0;
    for p in points.iter_rows() {
        let gap = expl.evaluate(p)? - explained_output(model, expl, p)?;
        total += gap * gap;
    }
    Ok(total / points.rows() as f64)
}

pub fn neighborhood_fidelity(
    model: &impl Predictor,
    expl: &Explanation,
    x: &[f64],
    spec: &NeighborhoodSpec,
    counter: u64,
) -> Result<f64> {
    let points = spec.sample(x, counter)?;
    neighborhood_fidelity_on_points(model, expl, &points)
}

/// Hash of a point's bit pattern, so that an explainer's random draw at a
/// neighbor depends on the neighbor itself rather than on its sample index.
fn point_key(x: &[f64]) -> u64 {
    x.iter().fold(0x243F_6A88_85A3_08D3, |h, v| substream(h, v.to_bits()))
}

/// Stability over explicit neighbors; `counter` seeds any explainer randomness.
pub fn stability_on_points(
    model: &impl InputGradient,
    explainer: &Explainer,
    x: &[f64],
    output_index: usize,
    points: &Matrix,
    counter: u64,
) -> Result<f64> {
    let anchor = explainer.explain(model, x, output_index, substream(counter, point_key(x)))?;
    let reference = anchor.as_vector();
    let mut total = 0.0;
    for p in points.iter_rows() {
        let e = explainer.explain(model, p, output_index, substream(counter, point_key(p)))?;
        if e.kind_name() != anchor.kind_name() {
            return Err(Error::WrongExplanationKind {
                expected: anchor.kind_name(),
                found: e.kind_name(),
            });
        }
        total += squared_distance(&reference, &e.as_vector());
    }
    Ok(total / points.rows() as f64)
}

pub fn stability_metric(
    model: &impl InputGradient,
    explainer: &Explainer,
    x: &[f64],
    output_index: usize,
    spec: &NeighborhoodSpec,
    counter: u64,
) -> Result<f64> {
    let points = spec.sample(x, counter)?;
    stability_on_points(model, explainer, x, output_index, &points, counter)
}

/// Mean and standard error of a list of per-point values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }
}

/// One metric for one explainer and output, over a test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// e.g. `LIME-NF`, `Saliency-S`, `MSE`.
    pub metric: String,
    pub explainer: String,
    /// Which output was explained: `y`, a class index, or `predicted`.
    pub output: String,
    pub summary: Summary,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    /// `mse` for regression, `accuracy` for classification.
    pub metric: String,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Label of the regularizer the model was trained with.
    pub regularizer: String,
    pub performance: Performance,
    pub rows: Vec<MetricRow>,
}

impl MetricsReport {
    pub fn find(&self, metric: &str, output: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.metric == metric && r.output == output)
    }

    /// Mean of `metric` across all outputs it was computed for.
    pub fn mean_over_outputs(&self, metric: &str) -> Option<f64> {
        let rows: Vec<_> = self.rows.iter().filter(|r| r.metric == metric).collect();
        if rows.is_empty() {
            None
        } else {
            Some(rows.iter().map(|r| r.summary.mean).sum::<f64>() / rows.len() as f64)
        }
    }

    /// Table with one line per metric and output.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,output,regularizer,mean,stderr,n\n");
        let perf_name = self.performance.metric.to_uppercase();
        let _ = writeln!(out, "{perf_name},all,{},{},,", self.regularizer, self.performance.value);
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.metric, r.output, self.regularizer, r.summary.mean, r.summary.stderr, r.summary.n
            );
        }
        out
    }
}

/// Side-by-side table of several reports (metric x regularizer).
pub fn comparison_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("metric,output");
    for r in reports {
        let _ = write!(out, ",{}", r.regularizer);
    }
    out.push('\n');
    let Some(first) = reports.first() else {
        return out;
    };
    let _ = write!(out, "{},all", first.performance.metric.to_uppercase());
    for r in reports {
        let _ = write!(out, ",{}", r.performance.value);
    }
    out.push('\n');
    for row in &first.rows {
        let _ = write!(out, "{},{}", row.metric, row.output);
        for r in reports {
            match r.find(&row.metric, &row.output) {
                Some(x) => {
                    let _ = write!(out, ",{}", x.summary.mean);
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::explainers::{lime_explain, lime_explain_on_points, taylor_explain, ExplanationKind};
    use crate::model::{Activation, FnPredictor, Layer, MlpModel};

    struct Square;

    impl Predictor for Square {
        fn input_dim(&self) -> usize {
            1
        }
        fn output_dim(&self) -> usize {
            1
        }
        fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![x[0] * x[0]])
        }
    }

    impl InputGradient for Square {
        fn input_gradient(&self, x: &[f64], _: usize) -> Result<Vec<f64>> {
            Ok(vec![2.0 * x[0]])
        }
    }

    fn affine(w: &[f64], b: f64) -> MlpModel {
        let layer = Layer {
            weights: Matrix::from_vec(1, w.len(), w.to_vec()).unwrap(),
            biases: vec![b],
        };
        MlpModel::from_layers(vec![layer], Activation::Tanh).unwrap()
    }

    fn offset(e: &Explanation, c: f64) -> Explanation {
        let mut e = e.clone();
        if let ExplanationKind::LocalLinear { intercept, .. } = &mut e.kind {
            *intercept += c;
        }
        e
    }

    #[test]
    fn exact_explanations_have_zero_fidelity() {
        let model = affine(&[0.5, -1.0], 0.2);
        let x = [0.3, 0.9];
        let spec = NeighborhoodSpec::gaussian(0.1, 200, 1);
        let e = lime_explain(&model, &x, &spec, 0.0, 0, 0).unwrap();
        assert!(point_fidelity(&model, &e, &x).unwrap() < 1e-12);
        assert!(neighborhood_fidelity(&model, &e, &x, &spec, 1).unwrap() < 1e-12);
        let lime = Explainer::Lime { neighborhood: spec, ridge: 0.0 };
        assert!(stability_metric(&model, &lime, &x, 0, &spec, 3).unwrap() < 1e-8);
        assert_eq!(stability_metric(&model, &Explainer::Saliency, &x, 0, &spec, 3).unwrap(), 0.0);
    }

    #[test]
    fn unit_offset() {
        let model = MlpModel::init(&[2, 5, 1], Activation::Tanh, 1).unwrap();
        let x = [0.1, 0.2];
        let e = taylor_explain(&model, &x, 0).unwrap();
        let shifted = offset(&e, 1.0);
        assert!((point_fidelity(&model, &shifted, &x).unwrap() - 1.0).abs() < 1e-12);

        let model = affine(&[2.0, 1.0], -1.0);
        let exact = taylor_explain(&model, &x, 0).unwrap();
        let spec = NeighborhoodSpec::gaussian(0.7, 50, 4);
        let nf = neighborhood_fidelity(&model, &offset(&exact, 0.3), &x, &spec, 0).unwrap();
        assert!((nf - 0.09).abs() < 1e-12);
    }

    #[test]
    fn square_three_point_enumeration() {
        let pts = Matrix::from_rows(&[[-1.0], [0.0], [1.0]]).unwrap();
        let e = lime_explain_on_points(&Square, &[0.0], &pts, 0.0, 0).unwrap();
        let nf = neighborhood_fidelity_on_points(&Square, &e, &pts).unwrap();
        let brute: f64 = [-1.0f64, 0.0, 1.0].iter().map(|x| (x * x - 2.0 / 3.0).powi(2)).sum::<f64>() / 3.0;
        assert!((nf - brute).abs() < 1e-14);
        assert!((nf - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn taylor_stability_closed_form() {
        // e(x) = (-x^2, 2x); over {x-h, x+h} the mean squared change is 4x^2h^2 + h^4 + 4h^2
        for (x, h) in [(0.5, 0.1), (-1.2, 0.3), (0.0, 0.25)] {
            let pts = Matrix::from_rows(&[[x - h], [x + h]]).unwrap();
            let s = stability_on_points(&Square, &Explainer::Taylor, &[x], 0, &pts, 0).unwrap();
            let enumerated = [x - h, x + h]
                .iter()
                .map(|p: &f64| (x * x - p * p).powi(2) + (2.0 * x - 2.0 * p).powi(2))
                .sum::<f64>()
                / 2.0;
            let closed = 4.0 * x * x * h * h + h.powi(4) + 4.0 * h * h;
            assert!((s - enumerated).abs() < 1e-12 && (s - closed).abs() < 1e-12);
        }
    }

    #[test]
    fn nf_approaches_pf_for_narrow_neighborhoods() {
        let model = MlpModel::init(&[3, 8, 1], Activation::Tanh, 6).unwrap();
        let x = [0.2, -0.1, 0.4];
        let e = lime_explain(&model, &x, &NeighborhoodSpec::gaussian(0.3, 0, 0), 1e-6, 0, 0).unwrap();
        let pf = point_fidelity(&model, &e, &x).unwrap();
        let nf = neighborhood_fidelity(&model, &e, &x, &NeighborhoodSpec::gaussian(1e-8, 500, 2), 0).unwrap();
        assert!((nf - pf).abs() < 1e-6);
    }

    #[test]
    fn sample_order_does_not_matter() {
        let model = MlpModel::init(&[2, 6, 2], Activation::Tanh, 2).unwrap();
        let x = [0.3, -0.6];
        let pts = NeighborhoodSpec::gaussian(0.2, 30, 9).sample(&x, 0).unwrap();
        let rev: Vec<usize> = (0..30).rev().collect();
        let flipped = pts.select_rows(&rev);
        let e = taylor_explain(&model, &x, 1).unwrap();
        let a = neighborhood_fidelity_on_points(&model, &e, &pts).unwrap();
        let b = neighborhood_fidelity_on_points(&model, &e, &flipped).unwrap();
        assert!((a - b).abs() < 1e-14);
        let lime = Explainer::Lime {
            neighborhood: NeighborhoodSpec::gaussian(0.2, 40, 1),
            ridge: 1e-6,
        };
        let s1 = stability_on_points(&model, &lime, &x, 0, &pts, 7).unwrap();
        let s2 = stability_on_points(&model, &lime, &x, 0, &flipped, 7).unwrap();
        assert!((s1 - s2).abs() < 1e-12 * s1.max(1.0));
    }

    #[test]
    fn saliency_has_no_fidelity() {
        let model = affine(&[1.0], 0.0);
        let s = Explainer::Saliency.explain(&model, &[0.0], 0, 0).unwrap();
        assert!(matches!(point_fidelity(&model, &s, &[0.0]), Err(Error::WrongExplanationKind { .. })));
        let f = FnPredictor::new(1, 1, |x: &[f64]| vec![x[0]]);
        assert!(neighborhood_fidelity_on_points(&f, &s, &Matrix::identity(1)).is_err());
    }

    #[test]
    fn summary_and_csv() {
        let s = Summary::of(&[1.0, 2.0, 3.0]);
        assert_eq!(s.mean, 2.0);
        assert!((s.stderr - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let report = MetricsReport {
            regularizer: "none".into(),
            performance: Performance {
                metric: "mse".into(),
                value: 0.5,
            },
            rows: vec![MetricRow {
                metric: "LIME-NF".into(),
                explainer: "LIME".into(),
                output: "y".into(),
                summary: s,
                values: vec![1.0, 2.0, 3.0],
            }],
        };
        let csv = report.to_csv();
        assert!(csv.starts_with("metric,output,regularizer,mean,stderr,n\nMSE,all,none,0.5,,\nLIME-NF,y,none,2,"));
        let table = comparison_csv(&[report.clone(), report]);
        assert_eq!(table.lines().nth(2).unwrap(), "LIME-NF,y,2,2");
    }
}
