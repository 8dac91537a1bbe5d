//! Explanation-quality penalties added to the training objective.
//!
//! * fidelity: residual of a local affine fit to the model over a sampled
//!   neighborhood;
//! * fidelity_1d: the same, perturbing one random coordinate at a time;
//! * stability: how far the model's output moves across the neighborhood.
//!
//! Each penalty returns its value together with the gradient of that value
//! with respect to every model output it consumed. Backpropagating those
//! output gradients through the model (see [`RegularizerResult::backprop`])
//! gives the parameter gradient.
//!
//! For the fidelity penalties the local fit `beta(theta)` is itself an argmin.
//! With `Z` the intercept-augmented design and `H = Z (Z'Z + ridge D)^-1 Z'`,
//! the residual is `r = (I - H) y` and the penalty `|r|^2 / m`. Because `H` is
//! symmetric and does not depend on the model, `d/dy = (2/m) (I - H) r`. At
//! ridge 0, `H r = 0` (residuals are orthogonal to the design) and this reduces
//! to `(2/m) r`; with ridge > 0 the extra `H r` term keeps the gradient exact.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{LeastSquares, Matrix};
use crate::model::{GradientTape, MlpModel, Predictor};
use crate::neighborhood::NeighborhoodSpec;

pub const DEFAULT_RIDGE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    #[default]
    None,
    Fidelity,
    #[serde(rename = "fidelity_1d")]
    Fidelity1d,
    Stability,
}

impl RegularizerKind {
    pub fn label(self) -> &'static str {
        match self {
            RegularizerKind::None => "none",
            RegularizerKind::Fidelity => "fidelity",
            RegularizerKind::Fidelity1d => "fidelity_1d",
            RegularizerKind::Stability => "stability",
        }
    }

    /// Neighborhood size used when a config leaves `m` at 0.
    pub fn default_samples(self, dim: usize) -> usize {
        match self {
            RegularizerKind::Fidelity => 5 * (dim + 1),
            _ => 5,
        }
    }
}

impl std::str::FromStr for RegularizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(RegularizerKind::None),
            "fidelity" => Ok(RegularizerKind::Fidelity),
            "fidelity_1d" | "fidelity-1d" => Ok(RegularizerKind::Fidelity1d),
            "stability" => Ok(RegularizerKind::Stability),
            _ => Err(Error::Config(format!("unknown regularizer `{s}`"))),
        }
    }
}

fn default_ridge() -> f64 {
    DEFAULT_RIDGE
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularizerConfig {
    pub kind: RegularizerKind,
    pub gamma: f64,
    /// Ridge on the local fit's slopes (fidelity kinds only).
    #[serde(default = "default_ridge")]
    pub ridge: f64,
    /// `m = 0` means "the default for this kind and input dimension".
    pub neighborhood: NeighborhoodSpec,
}

impl Default for RegularizerConfig {
    fn default() -> Self {
        Self::none()
    }
}

impl RegularizerConfig {
    pub fn none() -> Self {
        Self {
            kind: RegularizerKind::None,
            gamma: 0.0,
            ridge: DEFAULT_RIDGE,
            neighborhood: NeighborhoodSpec::gaussian(0.5, 0, 0),
        }
    }

    pub fn new(kind: RegularizerKind, gamma: f64, neighborhood: NeighborhoodSpec) -> Self {
        Self {
            kind,
            gamma,
            ridge: DEFAULT_RIDGE,
            neighborhood,
        }
    }

    /// True when the penalty contributes nothing to training.
    pub fn is_inactive(&self) -> bool {
        self.kind == RegularizerKind::None || self.gamma == 0.0
    }

    /// Fills in a zero sample count for inputs of dimension `dim`.
    pub fn resolved(&self, dim: usize) -> Self {
        let mut out = *self;
        if out.neighborhood.m == 0 {
            out.neighborhood.m = self.kind.default_samples(dim);
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::BadParameter(format!("gamma must be >= 0, got {}", self.gamma)));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::BadParameter(format!("ridge must be >= 0, got {}", self.ridge)));
        }
        if self.kind != RegularizerKind::None && self.neighborhood.m > 0 {
            self.neighborhood.validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularizerResult {
    pub loss: f64,
    /// The sampled neighbors, one per row.
    pub points: Matrix,
    /// `d loss / d f(points[j])`, one row per neighbor.
    pub point_grads: Matrix,
    /// `d loss / d f(x)` for penalties that also read the anchor's output.
    pub anchor_grad: Option<Vec<f64>>,
}

impl RegularizerResult {
    /// Adds `scale * d loss / d theta` into `tape`.
    pub fn backprop(&self, model: &MlpModel, x: &[f64], scale: f64, tape: &mut GradientTape) -> Result<()> {
        for (p, g) in self.points.iter_rows().zip(self.point_grads.iter_rows()) {
            if g.iter().any(|&v| v != 0.0) {
                model.backward_into(p, g, scale, tape)?;
            }
        }
        if let Some(g) = &self.anchor_grad {
            model.backward_into(x, g, scale, tape)?;
        }
        Ok(())
    }
}

fn predict_rows(model: &impl Predictor, points: &Matrix) -> Result<Matrix> {
    let mut out = Matrix::zeros(points.rows(), model.output_dim());
    for (i, p) in points.iter_rows().enumerate() {
        out.row_mut(i).copy_from_slice(&model.predict(p)?);
    }
    Ok(out)
}

/// Fidelity residual of a prefactored local fit, summed over output columns.
///
/// Returns the penalty and `d penalty / d predictions`.
pub fn fidelity_residual(fit: &LeastSquares, predictions: &Matrix) -> Result<(f64, Matrix)> {
    let m = fit.samples();
    if predictions.rows() != m {
        return Err(Error::BadShape(format!(
            "{} predictions for {m} neighbors",
            predictions.rows()
        )));
    }
    let scale = 2.0 / m as f64;
    let mut loss = 0.0;
    let mut grads = Matrix::zeros(m, predictions.cols());
    for o in 0..predictions.cols() {
        let (sol, r) = fit.fit_with_residuals(&predictions.column(o))?;
        loss += sol.residual_mean;
        let hr = fit.apply_hat(&r)?;
        for j in 0..m {
            grads[(j, o)] = scale * (r[j] - hr[j]);
        }
    }
    Ok((loss, grads))
}

/// Fidelity penalty for predictions at explicitly given neighbors.
pub fn fidelity_on_points(points: &Matrix, predictions: &Matrix, ridge: f64) -> Result<(f64, Matrix)> {
    fidelity_residual(&LeastSquares::new(points, ridge)?, predictions)
}

/// Stability penalty `(1/m) sum_j |f(x'_j) - f(x)|^2` for given predictions.
///
/// Returns the penalty, the per-neighbor gradients and the anchor gradient.
pub fn stability_on_points(predictions: &Matrix, anchor: &[f64]) -> Result<(f64, Matrix, Vec<f64>)> {
    if predictions.cols() != anchor.len() {
        return Err(Error::BadShape(format!(
            "{} outputs per neighbor but {} at the anchor",
            predictions.cols(),
            anchor.len()
        )));
    }
    let m = predictions.rows();
    let scale = 2.0 / m as f64;
    let mut loss = 0.0;
    let mut grads = Matrix::zeros(m, anchor.len());
    let mut anchor_grad = vec![0.0; anchor.len()];
    for j in 0..m {
        for (o, &a) in anchor.iter().enumerate() {
            let diff = predictions[(j, o)] - a;
            loss += diff * diff;
            grads[(j, o)] = scale * diff;
            anchor_grad[o] -= scale * diff;
        }
    }
    Ok((loss / m as f64, grads, anchor_grad))
}

fn expect_kind(config: &RegularizerConfig, kind: RegularizerKind) -> Result<()> {
    if config.kind != kind {
        return Err(Error::BadParameter(format!(
            "expected a {} regularizer config, got {}",
            kind.label(),
            config.kind.label()
        )));
    }
    Ok(())
}

/// Neighbors for one penalty evaluation, plus the perturbed coordinate for
/// `fidelity_1d`.
fn draw(config: &RegularizerConfig, x: &[f64], counter: u64) -> Result<(Matrix, Option<usize>)> {
    match config.kind {
        RegularizerKind::Fidelity1d => {
            if x.is_empty() {
                return Err(Error::BadShape("fidelity_1d needs at least one input feature".into()));
            }
            config.neighborhood.validate()?;
            let mut rng = config.neighborhood.rng(counter);
            let dim = rng.random_range(0..x.len());
            Ok((config.neighborhood.sample_one_dim_with(&mut rng, x, dim), Some(dim)))
        }
        _ => Ok((config.neighborhood.sample(x, counter)?, None)),
    }
}

/// Penalty and output gradients for drawn neighbors.
fn penalty(
    config: &RegularizerConfig,
    points: &Matrix,
    dim: Option<usize>,
    predictions: &Matrix,
    anchor: Option<&[f64]>,
) -> Result<(f64, Matrix, Option<Vec<f64>>)> {
    match (config.kind, dim, anchor) {
        (RegularizerKind::Fidelity, _, _) => {
            let (loss, g) = fidelity_on_points(points, predictions, config.ridge)?;
            Ok((loss, g, None))
        }
        (RegularizerKind::Fidelity1d, Some(dim), _) => {
            let fit = LeastSquares::with_columns(points, &[dim], config.ridge)?;
            let (loss, g) = fidelity_residual(&fit, predictions)?;
            Ok((loss, g, None))
        }
        (RegularizerKind::Stability, _, Some(anchor)) => {
            let (loss, g, a) = stability_on_points(predictions, anchor)?;
            Ok((loss, g, Some(a)))
        }
        _ => Err(Error::BadParameter(format!("no penalty for {}", config.kind.label()))),
    }
}

fn evaluate_kind(
    model: &impl Predictor,
    x: &[f64],
    config: &RegularizerConfig,
    counter: u64,
    kind: RegularizerKind,
) -> Result<RegularizerResult> {
    expect_kind(config, kind)?;
    let config = config.resolved(x.len());
    let (points, dim) = draw(&config, x, counter)?;
    let predictions = predict_rows(model, &points)?;
    let anchor = match kind {
        RegularizerKind::Stability => Some(model.predict(x)?),
        _ => None,
    };
    let (loss, point_grads, anchor_grad) = penalty(&config, &points, dim, &predictions, anchor.as_deref())?;
    Ok(RegularizerResult {
        loss,
        points,
        point_grads,
        anchor_grad,
    })
}

/// Local-affine fidelity penalty around `x`, with a fresh neighborhood drawn
/// from `config.neighborhood` at `counter`.
pub fn fidelity_loss(
    model: &impl Predictor,
    x: &[f64],
    config: &RegularizerConfig,
    counter: u64,
) -> Result<RegularizerResult> {
    evaluate_kind(model, x, config, counter, RegularizerKind::Fidelity)
}

/// Fidelity penalty along one uniformly chosen coordinate.
pub fn fidelity_1d_loss(
    model: &impl Predictor,
    x: &[f64],
    config: &RegularizerConfig,
    counter: u64,
) -> Result<RegularizerResult> {
    evaluate_kind(model, x, config, counter, RegularizerKind::Fidelity1d)
}

/// Output-stability penalty around `x`.
pub fn stability_loss(
    model: &impl Predictor,
    x: &[f64],
    config: &RegularizerConfig,
    counter: u64,
) -> Result<RegularizerResult> {
    evaluate_kind(model, x, config, counter, RegularizerKind::Stability)
}

/// Dispatches on `config.kind`; `None` for an absent regularizer.
pub fn regularizer_loss(
    model: &impl Predictor,
    x: &[f64],
    config: &RegularizerConfig,
    counter: u64,
) -> Result<Option<RegularizerResult>> {
    match config.kind {
        RegularizerKind::None => Ok(None),
        kind => evaluate_kind(model, x, config, counter, kind).map(Some),
    }
}

/// Training path of [`regularizer_loss`]: same draws and value, with
/// `scale * d penalty / d theta` added into `tape` from a single batched
/// forward pass. Returns the penalty (0 for an absent regularizer).
pub fn regularizer_backprop(
    model: &MlpModel,
    x: &[f64],
    config: &RegularizerConfig,
    counter: u64,
    scale: f64,
    tape: &mut GradientTape,
) -> Result<f64> {
    if config.kind == RegularizerKind::None {
        return Ok(0.0);
    }
    let config = config.resolved(x.len());
    let (points, dim) = draw(&config, x, counter)?;
    let m = points.rows();
    let with_anchor = config.kind == RegularizerKind::Stability;
    let batch = if with_anchor {
        let mut data = points.as_slice().to_vec();
        data.extend_from_slice(x);
        Matrix::from_vec(m + 1, x.len(), data)?
    } else {
        points.clone()
    };
    let trace = model.forward_batch(&batch)?;
    let outputs = trace.outputs();
    let predictions = if with_anchor {
        outputs.select_rows(&(0..m).collect::<Vec<_>>())
    } else {
        outputs.clone()
    };
    let anchor = with_anchor.then(|| outputs.row(m).to_vec());
    let (loss, point_grads, anchor_grad) = penalty(&config, &points, dim, &predictions, anchor.as_deref())?;
    let upstream = match anchor_grad {
        Some(a) => {
            let mut data = point_grads.as_slice().to_vec();
            data.extend_from_slice(&a);
            Matrix::from_vec(m + 1, a.len(), data)?
        }
        None => point_grads,
    };
    model.backward_batch(&trace, &upstream, scale, tape)?;
    Ok(loss)
}
