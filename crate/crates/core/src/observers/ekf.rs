use nalgebra::{DMatrix, DVector};

use super::{check_finite, Diagnostics, Estimator, EstimatorState, ObserverError, ObserverKind, StateModel};
use crate::linalg::{spd_solve, symmetrize};

/// One predict/update cycle of the extended Kalman filter.
pub fn ekf_step(
    state: &EstimatorState,
    u_prev: &DVector<f64>,
    y: &DVector<f64>,
    model: &dyn StateModel,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<EstimatorState, ObserverError> {
    let f = model.transition_jacobian(state.x_hat.as_slice(), u_prev.as_slice());
    let x_pred = model.transition_vec(&state.x_hat, u_prev);
    check_finite(ObserverKind::Ekf, &x_pred)?;
    let mut p_pred = &f * &state.p * f.transpose() + q;
    symmetrize(&mut p_pred);

    let h = model.observation_jacobian(x_pred.as_slice());
    let s = &h * &p_pred * h.transpose() + r;
    let kt = spd_solve(&s, &(&h * &p_pred)).ok_or(ObserverError::SingularUpdate(ObserverKind::Ekf))?;
    let k = kt.transpose();

    let innovation = y - model.observe_vec(&x_pred);
    let x_hat = x_pred + &k * innovation;
    check_finite(ObserverKind::Ekf, &x_hat)?;
    let mut p = &p_pred - &k * &h * &p_pred;
    symmetrize(&mut p);
    Ok(EstimatorState { x_hat, p, step: state.step + 1 })
}

#[derive(Debug, Clone)]
pub struct Ekf {
    state: EstimatorState,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl Ekf {
    pub fn new(state: EstimatorState, q: DMatrix<f64>, r: DMatrix<f64>) -> Self {
        Self { state, q, r }
    }
}

impl Estimator for Ekf {
    fn kind(&self) -> ObserverKind {
        ObserverKind::Ekf
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
        self.state = ekf_step(&self.state, u_prev, y, model, &self.q, &self.r)?;
        Ok(Diagnostics::default())
    }
}
