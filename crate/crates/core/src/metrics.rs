//! Post-run scoring: MSE against the true states, output-error magnitudes
//! against the noisy measurements, and wall-clock accounting.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::CaseId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("series lengths differ: {0} vs {1}")]
    Length(usize, usize),
    #[error("empty series")]
    Empty,
}

/// `(1/M) Σ (x - x̂)²`.
pub fn mse(truth: &[f64], est: &[f64]) -> Result<f64, MetricsError> {
    if truth.len() != est.len() {
        return Err(MetricsError::Length(truth.len(), est.len()));
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let s: f64 = truth.iter().zip(est).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(s / truth.len() as f64)
}

/// Mean of `√(e²) = |e|` over all samples of a flattened error series.
///
/// This is the average error magnitude, not a Euclidean norm of the series.
pub fn l2_metric(errors: &[f64]) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64
}

/// Largest `|e|` over a flattened error series.
pub fn linf_metric(errors: &[f64]) -> f64 {
    errors.iter().fold(0.0, |m, e| m.max(e.abs()))
}

/// Scores of one estimator on one variable. `None` where not applicable or
/// where the estimator was unavailable for part of the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub estimator: String,
    pub variable: String,
    pub mse: Option<f64>,
    pub l2: Option<f64>,
    pub linf: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WallTime {
    pub estimator: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub case: CaseId,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub rows: Vec<MetricRow>,
    pub wall_seconds: Vec<WallTime>,
}

impl MetricTable {
    pub fn get(&self, estimator: &str, variable: &str) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.estimator == estimator && r.variable == variable)
    }

    pub fn wall(&self, estimator: &str) -> Option<f64> {
        self.wall_seconds.iter().find(|w| w.estimator == estimator).map(|w| w.seconds)
    }
}

/// One estimator's history as seen by the scorer.
pub struct SeriesView<'a> {
    pub label: String,
    pub x_hat: Vec<Option<&'a DVector<f64>>>,
    pub e: Vec<Option<&'a DVector<f64>>>,
    pub wall_seconds: f64,
}

/// Name used for the whole output vector in the per-variable tables.
pub const STACKED: &str = "outputs";

/// Score every estimator: MSE on the unmeasured concentrations, L2/L∞ on each
/// measured concentration channel and on the stacked output vector.
pub fn metric_table(
    case: CaseId,
    seed: u64,
    dt: f64,
    horizon: f64,
    x_true: &[DVector<f64>],
    series: &[SeriesView<'_>],
) -> MetricTable {
    let names = case.state_names();
    let out_names = case.output_names();
    let mut rows = Vec::new();
    for s in series {
        let complete_x: Option<Vec<&DVector<f64>>> = s.x_hat.iter().copied().collect();
        let complete_e: Option<Vec<&DVector<f64>>> = s.e.iter().copied().collect();
        for i in case.estimated_indices() {
            let value = complete_x.as_ref().and_then(|xs| {
                let est: Vec<f64> = xs.iter().map(|x| x[i]).collect();
                let truth: Vec<f64> = x_true.iter().map(|x| x[i]).collect();
                mse(&truth, &est).ok()
            });
            rows.push(MetricRow { estimator: s.label.clone(), variable: names[i].clone(), mse: value, l2: None, linf: None });
        }
        let mut channels: Vec<(String, Vec<usize>)> =
            case.measured_concentration_outputs().into_iter().map(|c| (out_names[c].clone(), vec![c])).collect();
        channels.push((STACKED.to_string(), (0..case.output_dim()).collect()));
        for (var, idx) in channels {
            let flat: Option<Vec<f64>> =
                complete_e.as_ref().map(|es| es.iter().flat_map(|e| idx.iter().map(|&c| e[c])).collect());
            rows.push(MetricRow {
                estimator: s.label.clone(),
                variable: var,
                mse: None,
                l2: flat.as_deref().map(l2_metric),
                linf: flat.as_deref().map(linf_metric),
            });
        }
    }
    let wall_seconds =
        series.iter().map(|s| WallTime { estimator: s.label.clone(), seconds: s.wall_seconds }).collect();
    MetricTable { case, seed, dt, horizon, rows, wall_seconds }
}
