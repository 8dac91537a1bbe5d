//! Generalization of local-fidelity: the expected residual of the best local
//! affine fit, a model's local variance, and the Hoeffding bound tying the
//! training-set average residual to its population mean.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, solve_spd_jittered, Matrix};
use crate::model::Predictor;
use crate::neighborhood::{substream, NeighborhoodSpec};

/// Diagonal jitter applied when the neighborhood moment matrix is singular.
pub const MOMENT_JITTER: f64 = 1e-10;

pub const DEFAULT_MC_SAMPLES: usize = 10_000;

fn outputs(model: &impl Predictor, points: &Matrix, output_index: usize) -> Result<Vec<f64>> {
    if output_index >= model.output_dim() {
        return Err(Error::BadShape(format!(
            "output index {output_index} for a model with {} outputs",
            model.output_dim()
        )));
    }
    points
        .iter_rows()
        .map(|p| model.predict(p).map(|y| y[output_index]))
        .collect()
}

/// `E[f^2] - E[f z]^T E[z z^T]^{-1} E[f z]` with `z = (1, x')`, all moments
/// taken over the given (equally weighted) neighbors.
fn residual_from_values(points: &Matrix, values: &[f64]) -> Result<f64> {
    let n = points.rows() as f64;
    let p = points.cols() + 1;
    let mut moments = Matrix::zeros(p, p);
    let mut cross = vec![0.0; p];
    let mut second = 0.0;
    let mut z = vec![1.0; p];
    for (row, &f) in points.iter_rows().zip(values) {
        z[1..].copy_from_slice(row);
        for a in 0..p {
            cross[a] += f * z[a] / n;
            for b in a..p {
                moments[(a, b)] += z[a] * z[b] / n;
            }
        }
        second += f * f / n;
    }
    for a in 0..p {
        for b in 0..a {
            moments[(a, b)] = moments[(b, a)];
        }
    }
    let coef = solve_spd_jittered(&moments, &cross, MOMENT_JITTER)?;
    Ok((second - dot(&cross, &coef)).max(0.0))
}

/// Expected squared residual of the optimal affine explanation, with the
/// neighborhood given as an equally weighted point set.
pub fn expected_residual_on_points(model: &impl Predictor, points: &Matrix, output_index: usize) -> Result<f64> {
    let values = outputs(model, points, output_index)?;
    residual_from_values(points, &values)
}

/// Monte-Carlo estimate of the expected residual around `x`, using
/// `mc_samples` shared draws for every moment.
pub fn expected_residual(
    model: &impl Predictor,
    x: &[f64],
    spec: &NeighborhoodSpec,
    mc_samples: usize,
    output_index: usize,
    counter: u64,
) -> Result<f64> {
    if mc_samples < x.len() + 2 {
        return Err(Error::BadParameter(format!(
            "{mc_samples} Monte-Carlo samples cannot identify a {}-dimensional affine fit",
            x.len()
        )));
    }
    let points = spec.with_m(mc_samples).sample(x, counter)?;
    expected_residual_on_points(model, &points, output_index)
}

/// Population variance of one output over the given neighbors.
pub fn local_variance_on_points(model: &impl Predictor, points: &Matrix, output_index: usize) -> Result<f64> {
    let values = outputs(model, points, output_index)?;
    Ok(variance(&values))
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Residual and local variance around one point, from the same draws.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalResidual {
    pub residual: f64,
    pub variance: f64,
}

pub fn local_residual(
    model: &impl Predictor,
    x: &[f64],
    spec: &NeighborhoodSpec,
    mc_samples: usize,
    output_index: usize,
    counter: u64,
) -> Result<LocalResidual> {
    let points = spec.with_m(mc_samples).sample(x, counter)?;
    let values = outputs(model, &points, output_index)?;
    Ok(LocalResidual {
        residual: residual_from_values(&points, &values)?,
        variance: variance(&values),
    })
}

/// Per-point residuals for every row of `points`; point `i` uses draw
/// `substream(counter, i)`.
pub fn local_residuals(
    model: &impl Predictor,
    points: &Matrix,
    spec: &NeighborhoodSpec,
    mc_samples: usize,
    output_index: usize,
    counter: u64,
) -> Result<Vec<LocalResidual>> {
    points
        .iter_rows()
        .enumerate()
        .map(|(i, x)| local_residual(model, x, spec, mc_samples, output_index, substream(counter, i as u64)))
        .collect()
}

/// Empirical stand-in for the uniform local-variance bound `C`: the largest
/// Monte-Carlo local variance over the given (training) points.
pub fn estimate_c(
    model: &impl Predictor,
    points: &Matrix,
    spec: &NeighborhoodSpec,
    mc_samples: usize,
    output_index: usize,
    counter: u64,
) -> Result<f64> {
    if points.rows() == 0 {
        return Err(Error::EmptyDataset { needed: 1, found: 0 });
    }
    let mut c: f64 = 0.0;
    for (i, x) in points.iter_rows().enumerate() {
        let sample = spec.with_m(mc_samples).sample(x, substream(counter, i as u64))?;
        c = c.max(local_variance_on_points(model, &sample, output_index)?);
    }
    Ok(c)
}

/// Hoeffding slack `sqrt(C^2 ln(1/delta) / (2n))`.
pub fn hoeffding_slack(c: f64, delta: f64, n: usize) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::BadParameter(format!("delta must lie in (0, 1), got {delta}")));
    }
    if !(c >= 0.0) || n == 0 {
        return Err(Error::BadParameter(format!("need C >= 0 and n >= 1, got C = {c}, n = {n}")));
    }
    Ok((c * c * (1.0 / delta).ln() / (2.0 * n as f64)).sqrt())
}

/// Upper bound on the population mean residual holding with probability `1 - delta`.
pub fn hoeffding_bound(mean_train_residual: f64, c: f64, delta: f64, n: usize) -> Result<f64> {
    Ok(mean_train_residual + hoeffding_slack(c, delta, n)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub output_index: usize,
    pub mean_train_residual: f64,
    pub variance_bound_c: f64,
    pub delta: f64,
    pub bound_value: f64,
    pub n: usize,
    pub neighborhood: NeighborhoodSpec,
    pub mc_samples: usize,
}

/// Residuals and `C` over the training points, combined into the bound.
pub fn bound_report(
    model: &impl Predictor,
    train_points: &Matrix,
    spec: &NeighborhoodSpec,
    mc_samples: usize,
    delta: f64,
    output_index: usize,
    counter: u64,
) -> Result<BoundReport> {
    let n = train_points.rows();
    if n == 0 {
        return Err(Error::EmptyDataset { needed: 1, found: 0 });
    }
    let local = local_residuals(model, train_points, spec, mc_samples, output_index, counter)?;
    let mean = local.iter().map(|l| l.residual).sum::<f64>() / n as f64;
    let c = local.iter().map(|l| l.variance).fold(0.0, f64::max);
    Ok(BoundReport {
        output_index,
        mean_train_residual: mean,
        variance_bound_c: c,
        delta,
        bound_value: hoeffding_bound(mean, c, delta, n)?,
        n,
        neighborhood: spec.with_m(mc_samples),
        mc_samples,
    })
}
