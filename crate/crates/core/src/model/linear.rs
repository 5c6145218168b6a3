use nalgebra::{DMatrix, DVector};

use super::scalar::Real;
use super::{arrhenius_rate, check_len, ModelError, PlantParams};

/// Linearized concentration subsystem of reactor 1 at fixed temperature.
///
/// `x = [CA1, CB1, CC1]`, `u = [F0, CA0, CB0]`, `y = CC1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub x_op: DVector<f64>,
    pub u_op: DVector<f64>,
    /// Reactor temperature held fixed during linearization.
    pub t_op: f64,
}

impl LinearModel {
    pub(crate) fn rhs<S: Real>(&self, x: &[S], u: &[f64], out: &mut [S]) {
        for (i, o) in out.iter_mut().enumerate() {
            let bu: f64 = (0..u.len()).map(|j| self.b[(i, j)] * u[j]).sum();
            let mut acc = x[0].lift(bu);
            for (j, xj) in x.iter().enumerate() {
                let a = self.a[(i, j)];
                if a != 0.0 {
                    acc = acc + xj.clone().scale(a);
                }
            }
            *o = acc;
        }
    }
}

/// Closed-form Jacobians of the reactor-1 concentration balances.
///
/// `x_op = [CA1, CB1, CC1]`, `u_op = [F0, CA0, CB0]`, and the rate constant is
/// evaluated at the fixed temperature `t_op`.
pub fn linearize(
    x_op: &DVector<f64>,
    u_op: &DVector<f64>,
    t_op: f64,
    params: &PlantParams,
) -> Result<LinearModel, ModelError> {
    check_len("operating state", 3, x_op.len())?;
    check_len("operating input", 3, u_op.len())?;
    params.validate()?;
    let k = arrhenius_rate(t_op, params)?;
    let q = params.fi / params.v;
    let (ca, cb) = (x_op[0], x_op[1]);
    let (f0, ca0, cb0) = (u_op[0], u_op[1], u_op[2]);
    let v = params.v;

    #[rustfmt::skip]
    let a = DMatrix::from_row_slice(3, 3, &[
        -(q + k * cb), -k * ca,       0.0,
        -k * cb,       -(q + k * ca), 0.0,
        k * cb,        k * ca,        -q,
    ]);
    #[rustfmt::skip]
    let b = DMatrix::from_row_slice(3, 3, &[
        ca0 / v, f0 / v, 0.0,
        cb0 / v, 0.0,    f0 / v,
        0.0,     0.0,    0.0,
    ]);
    let c = DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]);
    Ok(LinearModel { a, b, c, x_op: x_op.clone(), u_op: u_op.clone(), t_op })
}

/// `A x + B u`.
pub fn linear_dynamics(
    x: &DVector<f64>,
    u: &DVector<f64>,
    model: &LinearModel,
) -> Result<DVector<f64>, ModelError> {
    check_len("state", 3, x.len())?;
    check_len("input", 3, u.len())?;
    Ok(&model.a * x + &model.b * u)
}

/// Steady state of the reactor-1 concentration balances at temperature `t_op`.
///
/// With `d = CA - CB = F0 (CA0 - CB0) / Fi` the balance for A becomes the
/// quadratic `kV CA^2 + (Fi - kV d) CA - F0 CA0 = 0`.
pub fn steady_state_operating_point(
    params: &PlantParams,
    t_op: f64,
) -> Result<(DVector<f64>, DVector<f64>), ModelError> {
    params.validate()?;
    let k = arrhenius_rate(t_op, params)?;
    let kv = k * params.v;
    let d = params.f0 * (params.ca0 - params.cb0) / params.fi;
    let lin = params.fi - kv * d;
    let ca = if kv == 0.0 {
        params.f0 * params.ca0 / params.fi
    } else {
        (-lin + (lin * lin + 4.0 * kv * params.f0 * params.ca0).sqrt()) / (2.0 * kv)
    };
    let cb = ca - d;
    let cc = kv * ca * cb / params.fi;
    let x = DVector::from_vec(vec![ca, cb, cc]);
    let u = DVector::from_vec(vec![params.f0, params.ca0, params.cb0]);
    Ok((x, u))
}
