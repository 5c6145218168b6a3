//! Observability rank tests: the linear observability matrix and the
//! Lie-derivative observability map of the nonlinear reactor models.
//!
//! Lie derivatives are computed exactly (up to rounding) by Taylor-mode
//! differentiation: `L_f^j h(x0) = j! [t^j] h(x(t))` where `x(t)` solves
//! `x' = f(x, u0)`, and the gradients come from forward-mode seeds on `x0`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

use crate::model::scalar::Jet;
use crate::model::{CaseId, DiscreteModel, Dynamics, ModelError};

pub const DEFAULT_TOL: f64 = 1e-9;
/// Extra evaluation points sampled along the noiseless trajectory.
pub const TRAJECTORY_POINTS: usize = 5;
pub const TRAJECTORY_DT: f64 = 0.01;
pub const TRAJECTORY_STEPS: usize = 4000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservabilityError {
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("derivative order must be at least 1")]
    ZeroOrder,
    #[error("non-finite Lie derivative (order {order}, output {output})")]
    NonFinite { order: usize, output: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    FullyObservable,
    PartiallyObservable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObservabilityReport {
    pub case: Option<CaseId>,
    pub state_dim: usize,
    pub rank: usize,
    pub classification: Classification,
    /// Singular values of the matrix attaining `rank`, descending.
    pub singular_values: Vec<f64>,
    pub tolerance: f64,
    /// Rank at each evaluation point (one entry for the linear test).
    pub point_ranks: Vec<usize>,
}

impl ObservabilityReport {
    fn from_matrices(case: Option<CaseId>, state_dim: usize, mats: &[DMatrix<f64>], tol: f64) -> Self {
        let mut best: Option<(usize, Vec<f64>)> = None;
        let mut point_ranks = Vec::with_capacity(mats.len());
        for m in mats {
            let sv = singular_values(m);
            let rank = numerical_rank(&sv, tol);
            point_ranks.push(rank);
            if best.as_ref().is_none_or(|(r, _)| rank > *r) {
                best = Some((rank, sv));
            }
        }
        let (rank, singular_values) = best.unwrap_or((0, Vec::new()));
        let classification =
            if rank == state_dim { Classification::FullyObservable } else { Classification::PartiallyObservable };
        Self { case, state_dim, rank, classification, singular_values, tolerance: tol, point_ranks }
    }
}

/// Singular values sorted in descending order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.is_empty() {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Count of singular values above `tol * σ_max`.
pub fn numerical_rank(sv: &[f64], tol: f64) -> usize {
    let max = sv.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Rank of `[C; CA; ...; CA^{n-1}]`.
pub fn linear_observability(
    a: &DMatrix<f64>,
    c: &DMatrix<f64>,
    tol: f64,
) -> Result<ObservabilityReport, ObservabilityError> {
    let n = a.nrows();
    dim("A columns", n, a.ncols())?;
    dim("C columns", n, c.ncols())?;
    let p = c.nrows();
    let mut o = DMatrix::zeros(n * p, n);
    let mut block = c.clone();
    for j in 0..n {
        o.view_mut((j * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    Ok(ObservabilityReport::from_matrices(None, n, &[o], tol))
}

fn dim(what: &'static str, expected: usize, got: usize) -> Result<(), ObservabilityError> {
    if expected == got {
        Ok(())
    } else {
        Err(ObservabilityError::Dimension { what, expected, got })
    }
}

/// Dynamics plus an output map `y_i = scale_i * x[index_i]`.
#[derive(Debug, Clone)]
pub struct LieSystem {
    pub dynamics: Dynamics,
    pub outputs: Vec<(usize, f64)>,
}

impl LieSystem {
    /// The case's own measurement map.
    pub fn new(dynamics: Dynamics) -> Self {
        let outputs = dynamics.case().output_indices().iter().map(|&i| (i, 1.0)).collect();
        Self { dynamics, outputs }
    }

    /// Taylor coefficients of `x(t)` and their gradients w.r.t. `x0`, to `t^(order-1)`.
    fn taylor(&self, x0: &[f64], u0: &[f64], order: usize) -> Vec<Jet> {
        let n = x0.len();
        let mut x: Vec<Jet> = (0..n).map(|i| Jet::variable(x0[i], order, n, i)).collect();
        let mut f = x.clone();
        for m in 0..order.saturating_sub(1) {
            self.dynamics.rhs(&x, u0, &mut f);
            let inv = 1.0 / (m + 1) as f64;
            for (xi, fi) in x.iter_mut().zip(&f) {
                xi.v.c[m + 1] = fi.v.c[m] * inv;
                for (d, fd) in xi.d.iter_mut().zip(&fi.d) {
                    d.c[m + 1] = fd.c[m] * inv;
                }
            }
        }
        x
    }

    /// Lie derivatives `L_f^j h_i(x0)` for `j < order`, row `j * p + i`.
    pub fn lie_derivatives(&self, x0: &[f64], u0: &[f64], order: usize) -> DVector<f64> {
        let x = self.taylor(x0, u0, order);
        let p = self.outputs.len();
        let mut out = DVector::zeros(order * p);
        let mut fact = 1.0;
        for j in 0..order {
            if j > 0 {
                fact *= j as f64;
            }
            for (i, &(idx, s)) in self.outputs.iter().enumerate() {
                out[j * p + i] = s * fact * x[idx].v.c[j];
            }
        }
        out
    }

    /// Stacked gradients `∂(L_f^j h)/∂x` at `x0`, `order * p` rows.
    pub fn observability_matrix(
        &self,
        x0: &[f64],
        u0: &[f64],
        order: usize,
    ) -> Result<DMatrix<f64>, ObservabilityError> {
        let n = self.dynamics.state_dim();
        dim("state", n, x0.len())?;
        if order == 0 {
            return Err(ObservabilityError::ZeroOrder);
        }
        let x = self.taylor(x0, u0, order);
        let p = self.outputs.len();
        let mut o = DMatrix::zeros(order * p, n);
        let mut fact = 1.0;
        for j in 0..order {
            if j > 0 {
                fact *= j as f64;
            }
            for (i, &(idx, s)) in self.outputs.iter().enumerate() {
                for k in 0..n {
                    let v = s * fact * x[idx].d[k].c[j];
                    if !v.is_finite() {
                        return Err(ObservabilityError::NonFinite { order: j, output: i });
                    }
                    o[(j * p + i, k)] = v;
                }
            }
        }
        Ok(o)
    }
}

/// Scale every nonzero row to unit Euclidean norm. Rank-preserving.
pub fn equilibrate_rows(m: &mut DMatrix<f64>) {
    for mut row in m.row_iter_mut() {
        let norm = row.norm();
        if norm > 0.0 {
            row /= norm;
        }
    }
}

/// Points at which the nonlinear rank is evaluated: `x0` and
/// [`TRAJECTORY_POINTS`] evenly spaced samples of the noiseless Euler
/// trajectory from `x0` under constant `u0`.
pub fn evaluation_points(
    dynamics: &Dynamics,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
) -> Result<Vec<DVector<f64>>, ObservabilityError> {
    let model = DiscreteModel::new(dynamics.clone(), TRAJECTORY_DT)?;
    let stride = TRAJECTORY_STEPS / TRAJECTORY_POINTS;
    let mut pts = vec![x0.clone()];
    let mut x = x0.clone();
    for k in 1..=TRAJECTORY_STEPS {
        x = model.step(&x, u0)?;
        if k % stride == 0 {
            pts.push(x.clone());
        }
    }
    Ok(pts)
}

/// Maximum rank of the Lie-derivative observability matrix over the
/// evaluation points. Rows are equilibrated before the singular-value test.
pub fn nonlinear_observability(
    system: &LieSystem,
    x0: &DVector<f64>,
    u0: &DVector<f64>,
    order: usize,
    tol: f64,
) -> Result<ObservabilityReport, ObservabilityError> {
    let case = system.dynamics.case();
    dim("input", case.input_dim(), u0.len())?;
    let mut mats = Vec::new();
    for x in evaluation_points(&system.dynamics, x0, u0)? {
        let mut o = system.observability_matrix(x.as_slice(), u0.as_slice(), order)?;
        equilibrate_rows(&mut o);
        mats.push(o);
    }
    Ok(ObservabilityReport::from_matrices(Some(case), case.state_dim(), &mats, tol))
}
