use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_finite, Diagnostics, Estimator, EstimatorState, ObserverError, ObserverKind, StateModel};
use crate::linalg::{cholesky_jittered, noise_factor};

/// When the bootstrap filter resamples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resampling {
    #[default]
    Every,
    Never,
    /// Resample when `ESS < fraction * N`.
    EssBelow(f64),
}

/// Particles stored as columns with normalized weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    pub particles: DMatrix<f64>,
    pub weights: Vec<f64>,
}

impl ParticleCloud {
    /// `count` particles drawn from `N(mean, std² I)` with uniform weights.
    pub fn sample(mean: &DVector<f64>, std: f64, count: usize, rng: &mut impl Rng) -> Self {
        let n = mean.len();
        let particles = DMatrix::from_fn(n, count, |i, _| {
            let z: f64 = StandardNormal.sample(rng);
            mean[i] + std * z
        });
        Self { particles, weights: vec![1.0 / count as f64; count] }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Weighted mean and scatter.
    pub fn moments(&self) -> (DVector<f64>, DMatrix<f64>) {
        let w = DVector::from_column_slice(&self.weights);
        let mean = &self.particles * &w;
        let n = mean.len();
        let mut cov = DMatrix::zeros(n, n);
        for (col, &wi) in self.particles.column_iter().zip(&self.weights) {
            let d = col - &mean;
            cov.ger(wi, &d, &d, 1.0);
        }
        (mean, cov)
    }
}

/// Systematic resampling: indices selected by the comb `(u0 + j) / N`, `u0 ∈ [0, 1)`.
pub fn systematic_resample(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut cum = weights.first().copied().unwrap_or(0.0) / total;
    let mut i = 0;
    for j in 0..n {
        let pos = (u0 + j as f64) / n as f64;
        while pos >= cum && i + 1 < n {
            i += 1;
            cum += weights[i] / total;
        }
        out.push(i);
    }
    out
}

/// One bootstrap step: propagate with process noise, weight by the Gaussian
/// likelihood of `y`, estimate, then resample per `schedule`.
///
/// The estimate is the weighted mean before resampling. If every weight
/// underflows the weights are reset to uniform and the step is flagged.
#[allow(clippy::too_many_arguments)]
pub fn pf_step(
    cloud: &mut ParticleCloud,
    step: usize,
    u_prev: &DVector<f64>,
    y: &DVector<f64>,
    model: &dyn StateModel,
    q_factor: &DMatrix<f64>,
    r_chol: &DMatrix<f64>,
    schedule: Resampling,
    rng: &mut impl Rng,
) -> Result<(EstimatorState, Diagnostics), ObserverError> {
    let n = model.state_dim();
    let count = cloud.len();
    let mut next = DMatrix::zeros(n, count);
    let mut z = DVector::zeros(q_factor.ncols());
    let mut log_w = Vec::with_capacity(count);
    let mut y_hat = vec![0.0; model.output_dim()];
    for (j, (src, mut dst)) in cloud.particles.column_iter().zip(next.column_iter_mut()).enumerate() {
        model.transition(src.as_slice(), u_prev.as_slice(), dst.as_mut_slice());
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(rng);
        }
        dst += q_factor * &z;
        model.observe(dst.as_slice(), &mut y_hat);
        let e = y - DVector::from_column_slice(&y_hat);
        let ll = match r_chol.solve_lower_triangular(&e) {
            Some(v) => -0.5 * v.norm_squared(),
            None => f64::NEG_INFINITY,
        };
        let lw = cloud.weights[j].ln() + ll;
        log_w.push(if lw.is_nan() { f64::NEG_INFINITY } else { lw });
    }
    cloud.particles = next;

    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut collapse = !max.is_finite();
    if !collapse {
        let w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            cloud.weights = w.into_iter().map(|v| v / sum).collect();
        } else {
            collapse = true;
        }
    }
    if collapse {
        cloud.weights = vec![1.0 / count as f64; count];
    }

    let ess = cloud.ess();
    let (x_hat, p) = cloud.moments();
    check_finite(ObserverKind::Pf, &x_hat)?;

    let resample = match schedule {
        Resampling::Every => true,
        Resampling::Never => false,
        Resampling::EssBelow(frac) => ess < frac * count as f64,
    };
    if resample {
        let u0: f64 = rng.random();
        let idx = systematic_resample(&cloud.weights, u0);
        let old = std::mem::replace(&mut cloud.particles, DMatrix::zeros(n, count));
        for (j, &i) in idx.iter().enumerate() {
            cloud.particles.set_column(j, &old.column(i));
        }
        cloud.weights = vec![1.0 / count as f64; count];
    }
    Ok((EstimatorState { x_hat, p, step: step + 1 }, Diagnostics { ess: Some(ess), weight_collapse: collapse }))
}

pub struct ParticleFilter {
    cloud: ParticleCloud,
    state: EstimatorState,
    q_factor: DMatrix<f64>,
    r_chol: DMatrix<f64>,
    schedule: Resampling,
    rng: ChaCha8Rng,
}

impl ParticleFilter {
    pub fn new(
        cloud: ParticleCloud,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        schedule: Resampling,
        rng: ChaCha8Rng,
    ) -> Result<Self, ObserverError> {
        let q_factor = noise_factor(&q).map_err(|_| ObserverError::CovarianceDegeneracy(ObserverKind::Pf))?;
        let r_chol = cholesky_jittered(&r).ok_or(ObserverError::SingularUpdate(ObserverKind::Pf))?;
        let (x_hat, p) = cloud.moments();
        Ok(Self { cloud, state: EstimatorState { x_hat, p, step: 0 }, q_factor, r_chol, schedule, rng })
    }

    pub fn cloud(&self) -> &ParticleCloud {
        &self.cloud
    }
}

impl Estimator for ParticleFilter {
    fn kind(&self) -> ObserverKind {
        ObserverKind::Pf
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
        let (state, diag) = pf_step(
            &mut self.cloud,
            self.state.step,
            u_prev,
            y,
            model,
            &self.q_factor,
            &self.r_chol,
            self.schedule,
            &mut self.rng,
        )?;
        self.state = state;
        Ok(diag)
    }
}
