use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{check_finite, Diagnostics, Estimator, EstimatorState, ObserverError, ObserverKind, StateModel};
use crate::linalg::{cholesky_jittered, spd_solve, symmetrize};

/// Tensor-product Gauss–Hermite rule for the standard normal.
///
/// `nodes` holds one unit-space point per column, `weights` sums to one.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule {
    pub nodes: DMatrix<f64>,
    pub weights: DVector<f64>,
}

impl GaussHermiteRule {
    pub fn dim(&self) -> usize {
        self.nodes.nrows()
    }

    pub fn len(&self) -> usize {
        self.nodes.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.ncols() == 0
    }
}

/// `m^n`, or `None` on overflow.
pub fn gh_point_count(n: usize, m: usize) -> Option<usize> {
    m.checked_pow(u32::try_from(n).ok()?)
}

/// Three-point-per-axis rule: nodes `{-√3, 0, √3}`, weights `{1/6, 2/3, 1/6}`.
pub fn gh_points(n: usize, m: usize) -> Result<GaussHermiteRule, ObserverError> {
    if m != 3 {
        return Err(ObserverError::UnsupportedOrder(m));
    }
    let count = gh_point_count(n, m)
        .ok_or_else(|| ObserverError::Capacity { points: format!("{m}^{n}"), budget: usize::MAX })?;
    let axis = [(-(3f64.sqrt()), 1.0 / 6.0), (0.0, 2.0 / 3.0), (3f64.sqrt(), 1.0 / 6.0)];
    let mut nodes = DMatrix::zeros(n, count);
    let mut weights = DVector::zeros(count);
    for j in 0..count {
        let mut rest = j;
        let mut w = 1.0;
        for d in 0..n {
            let (node, wd) = axis[rest % 3];
            rest /= 3;
            nodes[(d, j)] = node;
            w *= wd;
        }
        weights[j] = w;
    }
    Ok(GaussHermiteRule { nodes, weights })
}

/// `Σ_j w_j (a_j - ma)(b_j - mb)ᵀ` over the columns of `a` and `b`.
fn centered_cross(
    a: &DMatrix<f64>,
    ma: &DVector<f64>,
    b: &DMatrix<f64>,
    mb: &DVector<f64>,
    w: &DVector<f64>,
) -> DMatrix<f64> {
    let (na, nb) = (a.nrows(), b.nrows());
    let mut acc = vec![0.0; na * nb];
    let mut da = vec![0.0; na];
    let mut db = vec![0.0; nb];
    for ((ca, cb), &wj) in a.column_iter().zip(b.column_iter()).zip(w.iter()) {
        for i in 0..na {
            da[i] = wj * (ca[i] - ma[i]);
        }
        for i in 0..nb {
            db[i] = cb[i] - mb[i];
        }
        // column-major accumulation: acc[(r, c)] at c * na + r
        for (c, &dbc) in db.iter().enumerate() {
            let col = &mut acc[c * na..(c + 1) * na];
            for (o, &dar) in col.iter_mut().zip(&da) {
                *o += dar * dbc;
            }
        }
    }
    DMatrix::from_vec(na, nb, acc)
}

/// Points `mean + chol(cov) ξ_j`, one per column.
fn place(rule: &GaussHermiteRule, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<DMatrix<f64>, ObserverError> {
    let s = cholesky_jittered(cov).ok_or(ObserverError::CovarianceDegeneracy(ObserverKind::Qkf))?;
    let mut pts = &s * &rule.nodes;
    for mut col in pts.column_iter_mut() {
        col += mean;
    }
    Ok(pts)
}

fn map_columns_par(points: &DMatrix<f64>, rows: usize, f: impl Fn(&[f64], &mut [f64]) + Sync) -> DMatrix<f64> {
    let n = points.nrows();
    let mut out = DMatrix::zeros(rows, points.ncols());
    if rows == 0 || n == 0 {
        return out;
    }
    out.as_mut_slice()
        .par_chunks_mut(rows)
        .zip(points.as_slice().par_chunks(n))
        .with_min_len(512)
        .for_each(|(dst, src)| f(src, dst));
    out
}

/// One predict/update cycle of the Gauss–Hermite quadrature Kalman filter.
pub fn qkf_step(
    state: &EstimatorState,
    u_prev: &DVector<f64>,
    y: &DVector<f64>,
    model: &dyn StateModel,
    rule: &GaussHermiteRule,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<EstimatorState, ObserverError> {
    let n = model.state_dim();
    let p = model.output_dim();
    super::check_dim("quadrature dimension", n, rule.dim())?;
    let w = &rule.weights;

    let pts = place(rule, &state.x_hat, &state.p)?;
    let prop = map_columns_par(&pts, n, |x, o| model.transition(x, u_prev.as_slice(), o));
    drop(pts);
    let x_pred = &prop * w;
    check_finite(ObserverKind::Qkf, &x_pred)?;
    let mut p_pred = centered_cross(&prop, &x_pred, &prop, &x_pred, w) + q;
    symmetrize(&mut p_pred);
    drop(prop);

    let pts = place(rule, &x_pred, &p_pred)?;
    let z = map_columns_par(&pts, p, |x, o| model.observe(x, o));
    let z_hat = &z * w;
    let pzz = centered_cross(&z, &z_hat, &z, &z_hat, w) + r;
    let pxz = centered_cross(&pts, &x_pred, &z, &z_hat, w);
    let kt = spd_solve(&pzz, &pxz.transpose()).ok_or(ObserverError::SingularUpdate(ObserverKind::Qkf))?;
    let k = kt.transpose();

    let x_hat = &x_pred + &k * (y - z_hat);
    check_finite(ObserverKind::Qkf, &x_hat)?;
    let mut p_post = p_pred - &k * pzz * k.transpose();
    symmetrize(&mut p_post);
    Ok(EstimatorState { x_hat, p: p_post, step: state.step + 1 })
}

#[derive(Debug, Clone)]
pub struct Qkf {
    state: EstimatorState,
    q: DMatrix<f64>,
    r: DMatrix<f64>,
    rule: GaussHermiteRule,
}

impl Qkf {
    pub fn new(state: EstimatorState, q: DMatrix<f64>, r: DMatrix<f64>, rule: GaussHermiteRule) -> Self {
        Self { state, q, r, rule }
    }
}

impl Estimator for Qkf {
    fn kind(&self) -> ObserverKind {
        ObserverKind::Qkf
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
        self.state = qkf_step(&self.state, u_prev, y, model, &self.rule, &self.q, &self.r)?;
        Ok(Diagnostics::default())
    }
}
