use nalgebra::DMatrix;

use super::ObserverError;
use crate::linalg::{spd_solve, symmetrize};

pub const RICCATI_REL_TOL: f64 = 1e-12;
pub const RICCATI_MAX_ITER: usize = 100_000;

/// Steady-state Kalman gain by iterating the discrete Riccati recursion.
///
/// Starts from `P = Q` and iterates
/// `P <- A (P - P Cᵀ (C P Cᵀ + R)⁻¹ C P) Aᵀ + Q` until the Frobenius change
/// is below `RICCATI_REL_TOL` relative to `P`. Returns `(K∞, P∞)` with
/// `K∞ = P∞ Cᵀ (C P∞ Cᵀ + R)⁻¹`.
pub fn steady_state_gain(
    a_d: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>), ObserverError> {
    let n = a_d.nrows();
    super::check_dim("A columns", n, a_d.ncols())?;
    super::check_dim("C columns", n, c.ncols())?;
    super::check_dim("Q rows", n, q.nrows())?;
    super::check_dim("R rows", c.nrows(), r.nrows())?;

    let gain = |p: &DMatrix<f64>| -> Result<DMatrix<f64>, ObserverError> {
        let s = c * p * c.transpose() + r;
        // K = P Cᵀ S⁻¹  <=>  Kᵀ = S⁻¹ C P
        let kt = spd_solve(&s, &(c * p)).ok_or(ObserverError::GainSynthesis(0))?;
        Ok(kt.transpose())
    };

    let mut p = q.clone();
    for iter in 0..RICCATI_MAX_ITER {
        let k = gain(&p)?;
        let post = &p - &k * c * &p;
        let mut next = a_d * post * a_d.transpose() + q;
        symmetrize(&mut next);
        let change = (&next - &p).norm();
        let scale = next.norm();
        if !(change.is_finite() && scale.is_finite()) {
            return Err(ObserverError::GainSynthesis(iter + 1));
        }
        p = next;
        if change <= RICCATI_REL_TOL * scale || scale == 0.0 {
            return Ok((gain(&p)?, p));
        }
    }
    Err(ObserverError::GainSynthesis(RICCATI_MAX_ITER))
}
