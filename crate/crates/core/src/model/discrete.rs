use nalgebra::{DMatrix, DVector};

use super::{check_len, CaseId, Dynamics, ModelError};
use crate::linalg::central_jacobian;
use crate::observers::StateModel;

/// Relative step of the finite-difference transition Jacobian.
pub const JACOBIAN_REL_STEP: f64 = 1e-6;

/// Euler-discretized reactor model `x_{k+1} = x_k + dt f(x_k, u_k)`, `y = h(x)`.
///
/// This is the model every observer runs; it never clamps its state.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub dynamics: Dynamics,
    pub dt: f64,
}

impl DiscreteModel {
    pub fn new(dynamics: Dynamics, dt: f64) -> Result<Self, ModelError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(ModelError::InvalidStep(dt));
        }
        Ok(Self { dynamics, dt })
    }

    pub fn case(&self) -> CaseId {
        self.dynamics.case()
    }

    /// Constant measurement matrix `H = ∂h/∂x`.
    pub fn output_matrix(&self) -> DMatrix<f64> {
        let case = self.case();
        let mut h = DMatrix::zeros(case.output_dim(), case.state_dim());
        for (row, &i) in case.output_indices().iter().enumerate() {
            h[(row, i)] = 1.0;
        }
        h
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        check_len("state", self.case().state_dim(), x.len())?;
        check_len("input", self.case().input_dim(), u.len())?;
        let mut out = DVector::zeros(x.len());
        self.transition(x.as_slice(), u.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

impl StateModel for DiscreteModel {
    fn state_dim(&self) -> usize {
        self.case().state_dim()
    }

    fn output_dim(&self) -> usize {
        self.case().output_dim()
    }

    fn transition(&self, x: &[f64], u: &[f64], out: &mut [f64]) {
        self.dynamics.rhs(x, u, out);
        for (o, xi) in out.iter_mut().zip(x) {
            *o = xi + self.dt * *o;
        }
    }

    fn observe(&self, x: &[f64], out: &mut [f64]) {
        for (o, &i) in out.iter_mut().zip(self.case().output_indices()) {
            *o = x[i];
        }
    }

    fn transition_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        match &self.dynamics {
            Dynamics::Linear(m) => DMatrix::identity(3, 3) + &m.a * self.dt,
            Dynamics::Nonlinear { .. } => {
                let n = x.len();
                central_jacobian(x, n, JACOBIAN_REL_STEP, |xp, o| self.transition(xp, u, o))
            }
        }
    }

    fn observation_jacobian(&self, _x: &[f64]) -> DMatrix<f64> {
        self.output_matrix()
    }
}
