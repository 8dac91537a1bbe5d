//! Post-hoc local explainers.
//!
//! Semantic features get an affine explanation (`intercept + coefficients . x`),
//! either fitted over a sampled neighborhood (LIME-style) or read off the
//! gradient (first-order Taylor). Non-semantic features get a saliency vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, ols_fit, Matrix};
use crate::model::{InputGradient, Predictor};
use crate::neighborhood::NeighborhoodSpec;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExplanationKind {
    LocalLinear { intercept: f64, coefficients: Vec<f64> },
    Saliency { vector: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    #[serde(flatten)]
    pub kind: ExplanationKind,
    pub anchor_x: Vec<f64>,
    pub output_index: usize,
}

impl Explanation {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ExplanationKind::LocalLinear { .. } => "local_linear",
            ExplanationKind::Saliency { .. } => "saliency",
        }
    }

    /// `g(x)` for a local-linear explanation.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        match &self.kind {
            ExplanationKind::LocalLinear { intercept, coefficients } => {
                if x.len() != coefficients.len() {
                    return Err(Error::BadShape(format!(
                        "explanation has {} coefficients, point has {} features",
                        coefficients.len(),
                        x.len()
                    )));
                }
                Ok(intercept + dot(coefficients, x))
            }
            ExplanationKind::Saliency { .. } => Err(Error::WrongExplanationKind {
                expected: "local_linear",
                found: "saliency",
            }),
        }
    }

    /// The vector compared by the stability metric: intercept followed by
    /// coefficients, or the saliency vector.
    pub fn as_vector(&self) -> Vec<f64> {
        match &self.kind {
            ExplanationKind::LocalLinear { intercept, coefficients } => {
                let mut v = Vec::with_capacity(coefficients.len() + 1);
                v.push(*intercept);
                v.extend_from_slice(coefficients);
                v
            }
            ExplanationKind::Saliency { vector } => vector.clone(),
        }
    }
}

/// Sample count LIME uses when its neighborhood leaves `m` at 0.
pub fn default_lime_samples(dim: usize) -> usize {
    (5 * (dim + 1)).max(100)
}

fn check_output(model: &impl Predictor, output_index: usize) -> Result<()> {
    if output_index >= model.output_dim() {
        return Err(Error::BadShape(format!(
            "output index {output_index} for a model with {} outputs",
            model.output_dim()
        )));
    }
    Ok(())
}

/// Ridge-regularized local linear fit of one model output over `points`.
pub fn lime_explain_on_points(
    model: &impl Predictor,
    x: &[f64],
    points: &Matrix,
    ridge: f64,
    output_index: usize,
) -> Result<Explanation> {
    check_output(model, output_index)?;
    let targets = points
        .iter_rows()
        .map(|p| model.predict(p).map(|y| y[output_index]))
        .collect::<Result<Vec<_>>>()?;
    let fit = ols_fit(points, &targets, ridge)?;
    Ok(Explanation {
        kind: ExplanationKind::LocalLinear {
            intercept: fit.intercept(),
            coefficients: fit.slopes().to_vec(),
        },
        anchor_x: x.to_vec(),
        output_index,
    })
}

/// LIME-style explanation: sample around `x`, fit a ridge-penalized affine model.
pub fn lime_explain(
    model: &impl Predictor,
    x: &[f64],
    spec: &NeighborhoodSpec,
    ridge: f64,
    output_index: usize,
    counter: u64,
) -> Result<Explanation> {
    let spec = if spec.m == 0 {
        spec.with_m(default_lime_samples(x.len()))
    } else {
        *spec
    };
    let points = spec.sample(x, counter)?;
    lime_explain_on_points(model, x, &points, ridge, output_index)
}

/// First-order Taylor expansion of one output at `x`.
pub fn taylor_explain(model: &impl InputGradient, x: &[f64], output_index: usize) -> Result<Explanation> {
    check_output(model, output_index)?;
    let fx = model.predict(x)?[output_index];
    let grad = model.input_gradient(x, output_index)?;
    Ok(Explanation {
        kind: ExplanationKind::LocalLinear {
            intercept: fx - dot(&grad, x),
            coefficients: grad,
        },
        anchor_x: x.to_vec(),
        output_index,
    })
}

/// Signed gradient of `class_index` with respect to the input.
pub fn saliency_explain(model: &impl InputGradient, x: &[f64], class_index: usize) -> Result<Explanation> {
    check_output(model, class_index)?;
    Ok(Explanation {
        kind: ExplanationKind::Saliency {
            vector: model.input_gradient(x, class_index)?,
        },
        anchor_x: x.to_vec(),
        output_index: class_index,
    })
}

/// A configured explainer, as named in reports and experiment configs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Explainer {
    Lime {
        /// `m = 0` selects [`default_lime_samples`].
        neighborhood: NeighborhoodSpec,
        #[serde(default)]
        ridge: f64,
    },
    Taylor,
    Saliency,
}

impl Explainer {
    pub fn label(&self) -> &'static str {
        match self {
            Explainer::Lime { .. } => "LIME",
            Explainer::Taylor => "Taylor",
            Explainer::Saliency => "Saliency",
        }
    }

    pub fn is_local_linear(&self) -> bool {
        !matches!(self, Explainer::Saliency)
    }

    /// Explains `output_index` at `x`; `counter` selects LIME's sample draw.
    pub fn explain(
        &self,
        model: &impl InputGradient,
        x: &[f64],
        output_index: usize,
        counter: u64,
    ) -> Result<Explanation> {
        match self {
            Explainer::Lime { neighborhood, ridge } => {
                lime_explain(model, x, neighborhood, *ridge, output_index, counter)
            }
            Explainer::Taylor => taylor_explain(model, x, output_index),
            Explainer::Saliency => saliency_explain(model, x, output_index),
        }
    }
}
