//! The observer bank: extended Luenberger observer, extended/unscented/
//! Gauss–Hermite quadrature Kalman filters and a bootstrap particle filter,
//! all driven through the [`Estimator`] step interface.

mod ekf;
mod elo;
mod particle;
mod quadrature;
mod riccati;
mod ukf;

pub use ekf::{ekf_step, Ekf};
pub use elo::{elo_step, Elo};
pub use particle::{pf_step, systematic_resample, ParticleCloud, ParticleFilter, Resampling};
pub use quadrature::{gh_point_count, gh_points, qkf_step, GaussHermiteRule, Qkf};
pub use riccati::{steady_state_gain, RICCATI_MAX_ITER, RICCATI_REL_TOL};
pub use ukf::{ukf_sigma_points, ukf_step, SigmaPoints, Ukf};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::central_jacobian;

/// A discrete-time state-space model as seen by the observers.
pub trait StateModel: Sync {
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    /// `out = f_d(x, u)`.
    fn transition(&self, x: &[f64], u: &[f64], out: &mut [f64]);
    /// `out = h(x)`.
    fn observe(&self, x: &[f64], out: &mut [f64]);

    fn transition_jacobian(&self, x: &[f64], u: &[f64]) -> DMatrix<f64> {
        central_jacobian(x, self.state_dim(), 1e-6, |xp, o| self.transition(xp, u, o))
    }

    fn observation_jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        central_jacobian(x, self.output_dim(), 1e-6, |xp, o| self.observe(xp, o))
    }

    fn transition_vec(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.state_dim());
        self.transition(x.as_slice(), u.as_slice(), out.as_mut_slice());
        out
    }

    fn observe_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.output_dim());
        self.observe(x.as_slice(), out.as_mut_slice());
        out
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObserverError {
    #[error("{0:?} estimate diverged (non-finite component {1})")]
    Divergence(ObserverKind, usize),
    #[error("{0:?}: innovation covariance is not invertible")]
    SingularUpdate(ObserverKind),
    #[error("{0:?}: covariance is degenerate even after jitter")]
    CovarianceDegeneracy(ObserverKind),
    #[error("quadrature rule needs {points} points, budget is {budget}")]
    Capacity { points: String, budget: usize },
    #[error("only 3 points per axis are supported, got {0}")]
    UnsupportedOrder(usize),
    #[error("steady-state gain did not converge in {0} iterations")]
    GainSynthesis(usize),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("particle filter needs at least 2 particles, got {0}")]
    TooFewParticles(usize),
}

/// Observer identity; the declaration order is the switching tie-break order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ObserverKind {
    Elo,
    Ekf,
    Ukf,
    Qkf,
    Pf,
}

impl ObserverKind {
    pub const ALL: [ObserverKind; 5] =
        [ObserverKind::Elo, ObserverKind::Ekf, ObserverKind::Ukf, ObserverKind::Qkf, ObserverKind::Pf];

    pub fn label(self) -> &'static str {
        match self {
            ObserverKind::Elo => "ELO",
            ObserverKind::Ekf => "EKF",
            ObserverKind::Ukf => "UKF",
            ObserverKind::Qkf => "QKF",
            ObserverKind::Pf => "PF",
        }
    }

    pub fn parse(s: &str) -> Option<ObserverKind> {
        ObserverKind::ALL.into_iter().find(|k| k.label().eq_ignore_ascii_case(s.trim()))
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for ObserverKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// Per-kind tuning. Defaults are the standard bank settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "UPPERCASE", deny_unknown_fields)]
pub enum ObserverParams {
    Elo {},
    Ekf {},
    Ukf {
        #[serde(default = "one")]
        alpha: f64,
        #[serde(default = "two")]
        beta: f64,
        #[serde(default)]
        kappa: f64,
    },
    Qkf {
        #[serde(default = "three")]
        points_per_axis: usize,
        #[serde(default = "default_budget")]
        point_budget: usize,
    },
    Pf {
        #[serde(default = "default_particles")]
        particles: usize,
        #[serde(default)]
        resampling: Resampling,
    },
}

fn one() -> f64 {
    1.0
}
fn two() -> f64 {
    2.0
}
fn three() -> usize {
    3
}
fn default_budget() -> usize {
    1_000_000
}
fn default_particles() -> usize {
    500
}

impl ObserverParams {
    pub fn kind(&self) -> ObserverKind {
        match self {
            ObserverParams::Elo {} => ObserverKind::Elo,
            ObserverParams::Ekf {} => ObserverKind::Ekf,
            ObserverParams::Ukf { .. } => ObserverKind::Ukf,
            ObserverParams::Qkf { .. } => ObserverKind::Qkf,
            ObserverParams::Pf { .. } => ObserverKind::Pf,
        }
    }

    pub fn default_for(kind: ObserverKind) -> Self {
        match kind {
            ObserverKind::Elo => ObserverParams::Elo {},
            ObserverKind::Ekf => ObserverParams::Ekf {},
            ObserverKind::Ukf => ObserverParams::Ukf { alpha: 1.0, beta: 2.0, kappa: 0.0 },
            ObserverKind::Qkf => ObserverParams::Qkf { points_per_axis: 3, point_budget: default_budget() },
            ObserverKind::Pf => ObserverParams::Pf { particles: 500, resampling: Resampling::default() },
        }
    }

    pub fn default_bank() -> Vec<ObserverParams> {
        ObserverKind::ALL.into_iter().map(Self::default_for).collect()
    }
}

/// Full configuration of one bank member.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub params: ObserverParams,
    /// Process noise covariance assumed by the filter.
    pub q: DMatrix<f64>,
    /// Measurement noise covariance assumed by the filter.
    pub r: DMatrix<f64>,
    /// Standard deviation of the initial-estimate draw around the nominal state.
    pub init_std: f64,
}

impl ObserverConfig {
    pub fn kind(&self) -> ObserverKind {
        self.params.kind()
    }
}

/// Mean and covariance carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub x_hat: DVector<f64>,
    pub p: DMatrix<f64>,
    pub step: usize,
}

/// Floor applied to nonpositive diagonal entries of the initial covariance.
pub const P0_FLOOR: f64 = 1e-6;

/// Draw `x̂0 ~ N(x0, std² I)` and set `P0 = diag(x̂0)` (nonpositive entries floored).
pub fn init_estimator(x0_nominal: &DVector<f64>, std: f64, rng: &mut impl Rng) -> EstimatorState {
    let x_hat = x0_nominal.map(|m| {
        let z: f64 = StandardNormal.sample(rng);
        m + std * z
    });
    let diag = x_hat.map(|v| if v > 0.0 { v } else { P0_FLOOR });
    EstimatorState { p: DMatrix::from_diagonal(&diag), x_hat, step: 0 }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Diagnostics {
    /// Effective sample size before resampling (particle filter only).
    pub ess: Option<f64>,
    /// All particle weights vanished and were reset to uniform.
    pub weight_collapse: bool,
}

/// One observer's output at one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorRecord {
    pub kind: ObserverKind,
    pub step: usize,
    pub x_hat: DVector<f64>,
    pub y_hat: DVector<f64>,
    /// `y - ŷ`.
    pub e: DVector<f64>,
    pub wall_seconds: f64,
    pub diagnostics: Diagnostics,
}

impl EstimatorRecord {
    pub fn new(
        kind: ObserverKind,
        state: &EstimatorState,
        model: &dyn StateModel,
        y: &DVector<f64>,
        wall_seconds: f64,
        diagnostics: Diagnostics,
    ) -> Self {
        let y_hat = model.observe_vec(&state.x_hat);
        let e = y - &y_hat;
        Self { kind, step: state.step, x_hat: state.x_hat.clone(), y_hat, e, wall_seconds, diagnostics }
    }
}

/// A bank member. `step` advances the estimate from sample `k-1` to `k`.
pub trait Estimator: Send {
    fn kind(&self) -> ObserverKind;
    fn state(&self) -> &EstimatorState;
    /// `u_prev` and `y_prev` belong to sample `k-1`, `y` to sample `k`.
    fn step(
        &mut self,
        model: &dyn StateModel,
        u_prev: &DVector<f64>,
        y_prev: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<Diagnostics, ObserverError>;
}

/// Build and initialize a bank member around `x0_nominal`.
///
/// `u0` is the input at the initial operating point (used for the ELO gain).
pub fn build_estimator(
    config: &ObserverConfig,
    model: &dyn StateModel,
    x0_nominal: &DVector<f64>,
    u0: &DVector<f64>,
    rng: rand_chacha::ChaCha8Rng,
) -> Result<Box<dyn Estimator>, ObserverError> {
    let n = model.state_dim();
    let p = model.output_dim();
    check_dim("initial state", n, x0_nominal.len())?;
    check_dim("Q rows", n, config.q.nrows())?;
    check_dim("R rows", p, config.r.nrows())?;
    let mut rng = rng;
    Ok(match &config.params {
        ObserverParams::Elo {} => {
            let a_d = model.transition_jacobian(x0_nominal.as_slice(), u0.as_slice());
            let c = model.observation_jacobian(x0_nominal.as_slice());
            let (gain, _) = steady_state_gain(&a_d, &c, &config.q, &config.r)?;
            let state = init_estimator(x0_nominal, config.init_std, &mut rng);
            Box::new(Elo::new(state, gain))
        }
        ObserverParams::Ekf {} => {
            let state = init_estimator(x0_nominal, config.init_std, &mut rng);
            Box::new(Ekf::new(state, config.q.clone(), config.r.clone()))
        }
        ObserverParams::Ukf { alpha, beta, kappa } => {
            let state = init_estimator(x0_nominal, config.init_std, &mut rng);
            Box::new(Ukf::new(state, config.q.clone(), config.r.clone(), *alpha, *beta, *kappa))
        }
        ObserverParams::Qkf { points_per_axis, point_budget } => {
            let count = gh_point_count(n, *points_per_axis);
            match count {
                Some(c) if c <= *point_budget => {}
                _ => {
                    return Err(ObserverError::Capacity {
                        points: format!("{points_per_axis}^{n}"),
                        budget: *point_budget,
                    })
                }
            }
            let rule = gh_points(n, *points_per_axis)?;
            let state = init_estimator(x0_nominal, config.init_std, &mut rng);
            Box::new(Qkf::new(state, config.q.clone(), config.r.clone(), rule))
        }
        ObserverParams::Pf { particles, resampling } => {
            if *particles < 2 {
                return Err(ObserverError::TooFewParticles(*particles));
            }
            let cloud = ParticleCloud::sample(x0_nominal, config.init_std, *particles, &mut rng);
            Box::new(ParticleFilter::new(cloud, config.q.clone(), config.r.clone(), *resampling, rng)?)
        }
    })
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<(), ObserverError> {
    if expected == got {
        Ok(())
    } else {
        Err(ObserverError::Dimension { what, expected, got })
    }
}

pub(crate) fn check_finite(kind: ObserverKind, x: &DVector<f64>) -> Result<(), ObserverError> {
    match x.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(ObserverError::Divergence(kind, i)),
        None => Ok(()),
    }
}

/// Weighted mean and cross-covariance of two point sets stored as columns.
///
/// Returns `(mean_x, mean_y, Σ w_i (x_i - x̄)(y_i - ȳ)ᵀ)` with `mean` weights
/// `wm` and covariance weights `wc`.
pub(crate) fn weighted_cross(
    xs: &DMatrix<f64>,
    ys: &DMatrix<f64>,
    wm: &DVector<f64>,
    wc: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>, DMatrix<f64>) {
    let mx = xs * wm;
    let my = ys * wm;
    let mut dx = xs.clone();
    for (mut col, w) in dx.column_iter_mut().zip(wc.iter()) {
        col -= &mx;
        col *= *w;
    }
    let mut dy = ys.clone();
    for mut col in dy.column_iter_mut() {
        col -= &my;
    }
    let cov = dx * dy.transpose();
    (mx, my, cov)
}
