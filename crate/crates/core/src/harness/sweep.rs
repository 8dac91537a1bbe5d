use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::evaluate::evaluate;
use super::train::train_model;
use super::run_on;
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Regularization weight.
    Gamma,
    /// Width of the regularizer's neighborhood.
    SigmaReg,
    /// Width of the evaluation neighborhood; the model is trained once.
    SigmaEval,
}

impl SweepAxis {
    pub fn label(self) -> &'static str {
        match self {
            SweepAxis::Gamma => "gamma",
            SweepAxis::SigmaReg => "sigma_reg",
            SweepAxis::SigmaEval => "sigma_eval",
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gamma" => Ok(SweepAxis::Gamma),
            "sigma_reg" => Ok(SweepAxis::SigmaReg),
            "sigma_eval" => Ok(SweepAxis::SigmaEval),
            _ => Err(Error::Config(format!("unknown sweep axis `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub axis: SweepAxis,
    pub value: f64,
    pub metrics: Option<MetricsReport>,
    pub error: Option<String>,
}

/// Runs one experiment per value of `axis`. A failing value is recorded and
/// the sweep moves on.
pub fn sweep(cfg: &TrainConfig, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    cfg.validate()?;
    let (train, test) = cfg.data.prepare()?;
    let record = |value: f64, r: Result<MetricsReport>| match r {
        Ok(m) => SweepPoint {
            axis,
            value,
            metrics: Some(m),
            error: None,
        },
        Err(e) => SweepPoint {
            axis,
            value,
            metrics: None,
            error: Some(e.to_string()),
        },
    };
    let label = if cfg.regularizer.is_inactive() {
        "none"
    } else {
        cfg.regularizer.kind.label()
    };
    if axis == SweepAxis::SigmaEval {
        let (model, _) = train_model(cfg, &train)?;
        return Ok(values
            .iter()
            .map(|&v| {
                let mut eval = cfg.eval.clone();
                eval.neighborhood = eval.neighborhood.with_width(v);
                let r = eval
                    .neighborhood
                    .validate()
                    .and_then(|_| evaluate(&model, &test, &eval, label));
                record(v, r)
            })
            .collect());
    }
    Ok(values
        .iter()
        .map(|&v| {
            let mut c = cfg.clone();
            match axis {
                SweepAxis::Gamma => c.regularizer.gamma = v,
                _ => c.regularizer.neighborhood = c.regularizer.neighborhood.with_width(v),
            }
            let r = c
                .validate()
                .and_then(|_| run_on(&c, &train, &test))
                .map(|e| e.report.metrics);
            record(v, r)
        })
        .collect())
}

/// One line per (value, metric row); failed values get a single `error` line.
pub fn frontier_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("axis,value,status,performance_metric,performance,metric,output,mean,stderr\n");
    for p in points {
        let axis = p.axis.label();
        match (&p.metrics, &p.error) {
            (Some(m), _) => {
                let perf = &m.performance;
                for r in &m.rows {
                    let _ = writeln!(
                        out,
                        "{axis},{},ok,{},{},{},{},{},{}",
                        p.value, perf.metric, perf.value, r.metric, r.output, r.summary.mean, r.summary.stderr
                    );
                }
            }
            (None, e) => {
                let msg = e.as_deref().unwrap_or("failed").replace([',', '\n'], ";");
                let _ = writeln!(out, "{axis},{},error: {msg},,,,,,", p.value);
            }
        }
    }
    out
}
