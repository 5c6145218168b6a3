//! Continuous-time CSTR train: nonlinear mass/energy balances, the linearized
//! single-reactor concentration model, measurement maps, forward-Euler
//! discretization and noisy plant simulation.

mod discrete;
mod linear;
mod params;
mod plant;
pub mod scalar;

pub use discrete::DiscreteModel;
pub use linear::{linear_dynamics, linearize, steady_state_operating_point, LinearModel};
pub use params::{CaseId, PlantParams, ReactorParams};
pub use scalar::{Jet, Real, Series};
pub use plant::{simulate_plant, simulate_plant_partial, PlantSetup, PlantTrajectory};

use nalgebra::DVector;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("invalid plant parameters: {0}")]
    InvalidParams(String),
    #[error("time step must be finite and > 0, got {0}")]
    InvalidStep(f64),
    #[error("integration diverged at step {step}: component {component} is not finite")]
    Divergence { step: usize, component: String },
    #[error("invalid noise covariance: {0}")]
    Noise(String),
}

pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), ModelError> {
    if expected == got {
        Ok(())
    } else {
        Err(ModelError::Dimension { what, expected, got })
    }
}

/// Arrhenius rate constant `k0 exp(-E / (Rg T))` in L/(mol min).
pub fn arrhenius_rate(t: f64, params: &PlantParams) -> Result<f64, ModelError> {
    if !(t > 0.0) {
        return Err(ModelError::NonPositiveTemperature(t));
    }
    Ok(params.k0 * (-params.e / (params.rg * t)).exp())
}

fn rate_constant<S: Real>(t: S, rg: f64, kin: &ReactorParams) -> S {
    t.recip().scale(-kin.e / rg).exp().scale(kin.k0)
}

/// Mass and energy balances of `kin.len()` reactors in series.
///
/// `u = [F0, CA0, CB0, T_in, Tj_in]`; each reactor owns a five-state block
/// `[CA, CB, CC, T, Tj]`. The first reactor is fed by `u`, later ones by the
/// outflow of their predecessor at flow `Fi`.
pub(crate) fn reactor_rhs<S: Real>(
    x: &[S],
    u: &[f64],
    p: &PlantParams,
    kin: &[ReactorParams],
    out: &mut [S],
) {
    let q = p.fi / p.v;
    let jacket_flow = p.fj / p.vj;
    for (r, kp) in kin.iter().enumerate() {
        let b = 5 * r;
        let (ca, cb, cc, t, tj) =
            (x[b].clone(), x[b + 1].clone(), x[b + 2].clone(), x[b + 3].clone(), x[b + 4].clone());
        let rate = rate_constant(t.clone(), p.rg, kp) * ca.clone() * cb.clone();
        let (ca_in, cb_in, t_up) = if r == 0 {
            (ca.lift(u[0] * u[1] / p.v), cb.lift(u[0] * u[2] / p.v), t.lift(u[3]))
        } else {
            (x[b - 5].clone().scale(q), x[b - 4].clone().scale(q), x[b - 2].clone())
        };
        let heat_gen = kp.dh / (p.rho * p.cp);
        let heat_xfer = kp.ua / (p.rho * p.cp * p.v);
        let jacket_xfer = kp.ua / (p.rho_j * p.cpj * p.vj);

        out[b] = ca_in - ca.scale(q) - rate.clone();
        out[b + 1] = cb_in - cb.scale(q) - rate.clone();
        out[b + 2] = rate.clone() - cc.scale(q);
        out[b + 3] = (t_up - t.clone()).scale(q) - rate.scale(heat_gen)
            + (tj.clone() - t.clone()).scale(heat_xfer);
        out[b + 4] = (tj.lift(u[4]) - tj.clone()).scale(jacket_flow) - (tj - t).scale(jacket_xfer);
    }
}

/// Right-hand side of the nonlinear model for Case 1, 2 or 3.
pub fn nonlinear_dynamics(
    x: &DVector<f64>,
    u: &DVector<f64>,
    params: &PlantParams,
    case: CaseId,
) -> Result<DVector<f64>, ModelError> {
    Dynamics::nonlinear(case, params.clone())?.eval(x, u)
}

/// Output map `y = h(x)`: a plain selection of state components.
pub fn measurement(x: &DVector<f64>, case: CaseId) -> Result<DVector<f64>, ModelError> {
    check_len("state", case.state_dim(), x.len())?;
    Ok(DVector::from_iterator(case.output_dim(), case.output_indices().iter().map(|&i| x[i])))
}

/// Either the nonlinear reactor train or the linearized special case.
#[derive(Debug, Clone)]
pub enum Dynamics {
    Nonlinear { case: CaseId, params: PlantParams, reactors: Vec<ReactorParams> },
    Linear(LinearModel),
}

impl Dynamics {
    pub fn nonlinear(case: CaseId, params: PlantParams) -> Result<Self, ModelError> {
        let reactors = vec![params.reactor(); case.reactors()];
        Self::nonlinear_with(case, params, reactors)
    }

    /// Nonlinear dynamics with per-reactor kinetic/thermal constants.
    pub fn nonlinear_with(
        case: CaseId,
        params: PlantParams,
        reactors: Vec<ReactorParams>,
    ) -> Result<Self, ModelError> {
        if case.is_linear() {
            return Err(ModelError::InvalidParams(
                "the special case uses linear dynamics".into(),
            ));
        }
        params.validate()?;
        check_len("reactor parameter sets", case.reactors(), reactors.len())?;
        Ok(Dynamics::Nonlinear { case, params, reactors })
    }

    pub fn case(&self) -> CaseId {
        match self {
            Dynamics::Nonlinear { case, .. } => *case,
            Dynamics::Linear(_) => CaseId::SpecialCase,
        }
    }

    pub fn state_dim(&self) -> usize {
        self.case().state_dim()
    }

    /// `out = f(x, u)` without dimension checks.
    pub fn rhs<S: Real>(&self, x: &[S], u: &[f64], out: &mut [S]) {
        match self {
            Dynamics::Nonlinear { params, reactors, .. } => reactor_rhs(x, u, params, reactors, out),
            Dynamics::Linear(m) => m.rhs(x, u, out),
        }
    }

    pub fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>, ModelError> {
        let case = self.case();
        check_len("state", case.state_dim(), x.len())?;
        check_len("input", case.input_dim(), u.len())?;
        let mut out = DVector::zeros(x.len());
        self.rhs(x.as_slice(), u.as_slice(), out.as_mut_slice());
        Ok(out)
    }
}

/// One forward-Euler step `x + dt f(x, u)`.
pub fn euler_step(
    x: &DVector<f64>,
    u: &DVector<f64>,
    dt: f64,
    dynamics: &Dynamics,
) -> Result<DVector<f64>, ModelError> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(ModelError::InvalidStep(dt));
    }
    let next = x + dynamics.eval(x, u)? * dt;
    if let Some(i) = next.iter().position(|v| !v.is_finite()) {
        return Err(ModelError::Divergence {
            step: 0,
            component: dynamics.case().state_names()[i].clone(),
        });
    }
    Ok(next)
}
