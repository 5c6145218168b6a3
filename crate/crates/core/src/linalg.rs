//! Small dense linear-algebra helpers shared by the plant and the filters.

use nalgebra::{DMatrix, DVector};

/// Diagonal jitter levels tried, in order, before a covariance is declared degenerate.
pub const JITTER_LEVELS: [f64; 3] = [1e-12, 1e-9, 1e-6];

pub fn symmetrize(p: &mut DMatrix<f64>) {
    let n = p.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = m;
            p[(j, i)] = m;
        }
    }
}

/// Lower Cholesky factor, escalating diagonal jitter on failure.
pub fn cholesky_jittered(p: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if let Some(c) = p.clone().cholesky() {
        return Some(c.l());
    }
    let n = p.nrows();
    for eps in JITTER_LEVELS {
        let q = p + DMatrix::identity(n, n) * eps;
        if let Some(c) = q.cholesky() {
            return Some(c.l());
        }
    }
    None
}

/// Factor `L` with `L Lᵀ = cov`, used to draw correlated Gaussian noise.
///
/// Diagonal matrices (including all-zero ones) are handled exactly.
pub fn noise_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>, String> {
    if cov.nrows() != cov.ncols() {
        return Err(format!("covariance is {}x{}, not square", cov.nrows(), cov.ncols()));
    }
    let n = cov.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || cov[(i, j)] == 0.0));
    if diagonal {
        let mut l = DMatrix::zeros(n, n);
        for i in 0..n {
            let d = cov[(i, i)];
            if !(d >= 0.0 && d.is_finite()) {
                return Err(format!("diagonal entry {i} is {d}"));
            }
            l[(i, i)] = d.sqrt();
        }
        return Ok(l);
    }
    cov.clone()
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| "covariance is not positive definite".to_string())
}

pub fn min_eigenvalue(p: &DMatrix<f64>) -> f64 {
    p.clone().symmetric_eigen().eigenvalues.min()
}

pub fn max_asymmetry(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((p[(i, j)] - p[(j, i)]).abs());
        }
    }
    worst
}

/// Relative finite-difference step for component value `v`.
#[inline]
pub fn fd_step(v: f64, rel: f64) -> f64 {
    rel * v.abs().max(1.0)
}

/// Central-difference Jacobian of `f: R^n -> R^m` at `x`.
pub fn central_jacobian(
    x: &[f64],
    m: usize,
    rel_step: f64,
    mut f: impl FnMut(&[f64], &mut [f64]),
) -> DMatrix<f64> {
    let n = x.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut xp = x.to_vec();
    let mut fp = vec![0.0; m];
    let mut fm = vec![0.0; m];
    for j in 0..n {
        let h = fd_step(x[j], rel_step);
        xp[j] = x[j] + h;
        f(&xp, &mut fp);
        xp[j] = x[j] - h;
        f(&xp, &mut fm);
        xp[j] = x[j];
        let inv = 1.0 / (2.0 * h);
        for i in 0..m {
            jac[(i, j)] = (fp[i] - fm[i]) * inv;
        }
    }
    jac
}

/// Solve `S X = B` for symmetric positive-definite `S` (no jitter).
pub fn spd_solve(s: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    s.clone().cholesky().map(|c| c.solve(b))
}

pub fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
