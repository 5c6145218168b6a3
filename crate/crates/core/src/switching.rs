//! Per-sample cost evaluation over the bank and argmin selection.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::observers::{EstimatorRecord, ObserverKind};

pub const KL_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitchError {
    #[error("observer bank is empty")]
    EmptyBank,
    #[error("no observer is available")]
    NoObserver,
    #[error("true-state switching needs the true state")]
    MissingTruth,
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
}

/// Reference signal for the cost.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    /// L1 and KL over the measured outputs `y` against `ŷ`.
    #[default]
    MeasurementBased,
    /// L1 over the output error, KL over the true state against `x̂`.
    /// Needs the simulated truth.
    TrueStateBased,
}

/// `Σ |e_i|`.
pub fn l1_error(e: &[f64]) -> f64 {
    e.iter().map(|v| v.abs()).sum()
}

/// Weighted log mismatch `Σ |y_i| |ln(|y_i| / max(|ŷ_i|, eps))|`.
///
/// Terms with `|y_i| < eps` contribute 0. Each term is taken in magnitude so
/// the score is nonnegative and zero only for matching magnitudes.
pub fn kl_error(y: &[f64], y_hat: &[f64], eps: f64) -> f64 {
    debug_assert_eq!(y.len(), y_hat.len());
    y.iter()
        .zip(y_hat)
        .map(|(&a, &b)| {
            let a = a.abs();
            if a < eps {
                0.0
            } else {
                a * (a / b.abs().max(eps)).ln().abs()
            }
        })
        .sum()
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let max = v.iter().copied().fold(0.0, f64::max);
    if max > 0.0 {
        v.iter().map(|x| x / max).collect()
    } else {
        vec![0.0; v.len()]
    }
}

/// `J_j = l1_j / max l1 + kl_j / max kl`; a zero maximum contributes 0.
pub fn switching_cost(l1: &[f64], kl: &[f64]) -> Result<Vec<f64>, SwitchError> {
    if l1.is_empty() {
        return Err(SwitchError::EmptyBank);
    }
    if l1.len() != kl.len() {
        return Err(SwitchError::Dimension { what: "KL list", expected: l1.len(), got: kl.len() });
    }
    Ok(normalized(l1).into_iter().zip(normalized(kl)).map(|(a, b)| a + b).collect())
}

/// Index of the smallest available cost; ties go to the lowest index.
pub fn select(j: &[f64], available: &[bool]) -> Result<usize, SwitchError> {
    if j.len() != available.len() {
        return Err(SwitchError::Dimension { what: "availability mask", expected: j.len(), got: available.len() });
    }
    let mut best: Option<usize> = None;
    for (i, (&c, &ok)) in j.iter().zip(available).enumerate() {
        if ok && best.is_none_or(|b| c < j[b]) {
            best = Some(i);
        }
    }
    best.ok_or(SwitchError::NoObserver)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchDecision {
    pub step: usize,
    /// Bank members in bank order; unavailable members carry `None` costs.
    pub kinds: Vec<ObserverKind>,
    pub l1: Vec<Option<f64>>,
    pub kl: Vec<Option<f64>>,
    pub cost: Vec<Option<f64>>,
    pub selected: ObserverKind,
    pub selected_index: usize,
    pub x_hat: DVector<f64>,
    pub y_hat: DVector<f64>,
    pub e: DVector<f64>,
}

/// Evaluate the cost of every available record and copy the best one.
///
/// `records[i]` belongs to `bank[i]` and is `None` for a masked member. The
/// bank must be ordered by [`ObserverKind`] so that index order is the
/// tie-break order. `x_true` is required in [`SwitchMode::TrueStateBased`].
pub fn swo_step(
    bank: &[ObserverKind],
    records: &[Option<&EstimatorRecord>],
    y: &DVector<f64>,
    x_true: Option<&DVector<f64>>,
    mode: SwitchMode,
) -> Result<SwitchDecision, SwitchError> {
    if records.is_empty() {
        return Err(SwitchError::EmptyBank);
    }
    if bank.len() != records.len() {
        return Err(SwitchError::Dimension { what: "records", expected: bank.len(), got: records.len() });
    }
    if mode == SwitchMode::TrueStateBased && x_true.is_none() {
        return Err(SwitchError::MissingTruth);
    }
    let avail: Vec<&EstimatorRecord> = records.iter().flatten().copied().collect();
    if avail.is_empty() {
        return Err(SwitchError::NoObserver);
    }
    let l1: Vec<f64> = avail.iter().map(|r| l1_error(r.e.as_slice())).collect();
    let kl: Vec<f64> = avail
        .iter()
        .map(|r| match (mode, x_true) {
            (SwitchMode::TrueStateBased, Some(x)) => kl_error(x.as_slice(), r.x_hat.as_slice(), KL_EPS),
            _ => kl_error(y.as_slice(), r.y_hat.as_slice(), KL_EPS),
        })
        .collect();
    let j = switching_cost(&l1, &kl)?;
    let pick = select(&j, &vec![true; j.len()])?;
    let chosen = avail[pick];

    let mut it = 0;
    let mut full_l1 = Vec::with_capacity(records.len());
    let mut full_kl = Vec::with_capacity(records.len());
    let mut full_j = Vec::with_capacity(records.len());
    let mut selected_index = 0;
    for (i, r) in records.iter().enumerate() {
        match r {
            Some(rec) => {
                debug_assert_eq!(rec.kind, bank[i]);
                full_l1.push(Some(l1[it]));
                full_kl.push(Some(kl[it]));
                full_j.push(Some(j[it]));
                if it == pick {
                    selected_index = i;
                }
                it += 1;
            }
            None => {
                full_l1.push(None);
                full_kl.push(None);
                full_j.push(None);
            }
        }
    }
    Ok(SwitchDecision {
        step: chosen.step,
        kinds: bank.to_vec(),
        l1: full_l1,
        kl: full_kl,
        cost: full_j,
        selected: chosen.kind,
        selected_index,
        x_hat: chosen.x_hat.clone(),
        y_hat: chosen.y_hat.clone(),
        e: chosen.e.clone(),
    })
}
