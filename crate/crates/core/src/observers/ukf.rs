use nalgebra::{DMatrix, DVector};

use super::{
    check_finite, weighted_cross, Diagnostics, Estimator, EstimatorState, ObserverError, ObserverKind,
    StateModel,
};
use crate::linalg::{cholesky_jittered, spd_solve, symmetrize};

/// Scaled unscented sigma points stored as the columns of `points`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPoints {
    pub points: DMatrix<f64>,
    pub wm: DVector<f64>,
    pub wc: DVector<f64>,
}

/// `2n + 1` sigma points of `N(mean, cov)` with scaling `λ = α²(n + κ) - n`.
pub fn ukf_sigma_points(
    mean: &DVector<f64>,
    cov: &DMatrix<f64>,
    alpha: f64,
    beta: f64,
    kappa: f64,
) -> Result<SigmaPoints, ObserverError> {
    let n = mean.len();
    let nf = n as f64;
    let lambda = alpha * alpha * (nf + kappa) - nf;
    let spread = nf + lambda;
    if !(spread > 0.0) {
        return Err(ObserverError::CovarianceDegeneracy(ObserverKind::Ukf));
    }
    let l = cholesky_jittered(&(cov * spread)).ok_or(ObserverError::CovarianceDegeneracy(ObserverKind::Ukf))?;
    let mut points = DMatrix::zeros(n, 2 * n + 1);
    points.set_column(0, mean);
    for i in 0..n {
        let col = l.column(i);
        points.set_column(1 + i, &(mean + col));
        points.set_column(1 + n + i, &(mean - col));
    }
    let w = 1.0 / (2.0 * spread);
    let mut wm = DVector::from_element(2 * n + 1, w);
    let mut wc = wm.clone();
    wm[0] = lambda / spread;
    wc[0] = lambda / spread + (1.0 - alpha * alpha + beta);
    Ok(SigmaPoints { points, wm, wc })
}

fn map_columns(points: &DMatrix<f64>, rows: usize, f: impl Fn(&[f64], &mut [f64])) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(rows, points.ncols());
    for (src, mut dst) in points.column_iter().zip(out.column_iter_mut()) {
        f(src.as_slice(), dst.as_mut_slice());
    }
    out
}

/// One predict/update cycle of the unscented Kalman filter.
///
/// Sigma points are regenerated from the predicted moments before the update.
#[allow(clippy::too_many_arguments)]
pub fn ukf_step(
    state: &EstimatorState,
    u_prev: &DVector<f64>,
    y: &DVector<f64>,
    model: &dyn StateModel,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    (alpha, beta, kappa): (f64, f64, f64),
) -> Result<EstimatorState, ObserverError> {
    let n = model.state_dim();
    let p = model.output_dim();
    let sp = ukf_sigma_points(&state.x_hat, &state.p, alpha, beta, kappa)?;
    let prop = map_columns(&sp.points, n, |x, o| model.transition(x, u_prev.as_slice(), o));
    let (x_pred, _, cov) = weighted_cross(&prop, &prop, &sp.wm, &sp.wc);
    check_finite(ObserverKind::Ukf, &x_pred)?;
    let mut p_pred = cov + q;
    symmetrize(&mut p_pred);

    let sp2 = ukf_sigma_points(&x_pred, &p_pred, alpha, beta, kappa)?;
    let z = map_columns(&sp2.points, p, |x, o| model.observe(x, o));
    let (_, z_hat, pzz) = weighted_cross(&z, &z, &sp2.wm, &sp2.wc);
    let (_, _, pxz) = weighted_cross(&sp2.points, &z, &sp2.wm, &sp2.wc);
    let pzz = pzz + r;
    let kt = spd_solve(&pzz, &pxz.transpose()).ok_or(ObserverError::SingularUpdate(ObserverKind::Ukf))?;
    let k = kt.transpose();

    let x_hat = &x_pred + &k * (y - z_hat);
    check_finite(ObserverKind::Ukf, &x_hat)?;
    let mut p_post = p_pred - &k * pzz * k.transpose();
    symmetrize(&mut p_post);
    Ok(EstimatorState { x_hat, p: p_post, step: state.step + 1 })
}

#[derive(Debug, Clone)]
pub struct Ukf {
    state: EstimatorState,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    scaling: (f64, f64, f64),
}

impl Ukf {
    pub fn new(state: EstimatorState, q: DMatrix<f64>, r: DMatrix<f64>, alpha: f64, beta: f64, kappa: f64) -> Self {
        Self { state, q, r, scaling: (alpha, beta, kappa) }
    }
}

impl Estimator for Ukf {
    fn kind(&self) -> ObserverKind {
        ObserverKind::Ukf
    }

    fn state(&self) -> &EstimatorState {
        &self.state
    }

    fn step(
        &mut self,
        model: &dyn StateModel,
        u_prev: &DVector<f64>,
        _y_prev: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<Diagnostics, ObserverError> {
        self.state = ukf_step(&self.state, u_prev, y, model, &self.q, &self.r, self.scaling)?;
        Ok(Diagnostics::default())
    }
}
