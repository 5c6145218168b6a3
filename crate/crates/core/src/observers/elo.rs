use nalgebra::{DMatrix, DVector};

use super::{check_finite, Diagnostics, Estimator, EstimatorState, ObserverError, ObserverKind, StateModel};

/// Predictor-form Luenberger step: `x̂_{k+1} = f_d(x̂_k, u_k) + L (y_k - h(x̂_k))`.
pub fn elo_step(
    state: &EstimatorState,
    u: &DVector<f64>,
    y: &DVector<f64>,
    model: &dyn StateModel,
    gain: &DMatrix<f64>,
) -> Result<EstimatorState, ObserverError> {
    let innovation = y - model.observe_vec(&state.x_hat);
    let x_hat = model.transition_vec(&state.x_hat, u) + gain * innovation;
    check_finite(ObserverKind::Elo, &x_hat)?;
    Ok(EstimatorState { x_hat, p: state.p.clone(), step: state.step + 1 })
}

/// Extended Luenberger observer with a fixed gain.
#[derive(Debug, Clone)]
pub struct Elo {
    state: EstimatorState,
    gain: DMatrix<f64>,
}

impl Elo {
    pub fn new(state: EstimatorState, gain: DMatrix<f64>) -> Self {
        Self { state, gain }
    }

    pub fn gain(&self) -> &DMatrix<f64> {
        &self.gain
    }
}

impl Estimator for Elo {
    fn kind(&self) -> ObserverKind {
        ObserverKind::Elo
    }

    fn state(&self) -> &EstimatorState {
        &self.state
    }

    fn step(
        &mut self,
        model: &dyn StateModel,
        u_prev: &DVector<f64>,
        y_prev: &DVector<f64>,
        _y: &DVector<f64>,
    ) -> Result<Diagnostics, ObserverError> {
        self.state = elo_step(&self.state, u_prev, y_prev, model, &self.gain)?;
        Ok(Diagnostics::default())
    }
}
