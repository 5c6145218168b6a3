use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use super::{check_len, measurement, Dynamics, ModelError};
use crate::linalg::noise_factor;
use crate::seeds;

/// Everything needed to roll the simulated plant forward.
#[derive(Debug, Clone)]
pub struct PlantSetup {
    pub dynamics: Dynamics,
    pub dt: f64,
    pub steps: usize,
    pub x0: DVector<f64>,
    pub u: DVector<f64>,
    /// Process noise covariance (n x n), added after each Euler step.
    pub q: DMatrix<f64>,
    /// Measurement noise covariance (p x p).
    pub r: DMatrix<f64>,
    pub seed: u64,
}

/// Sampled plant history; index `k` is time `k * dt`, `steps + 1` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantTrajectory {
    pub t: Vec<f64>,
    pub x: Vec<DVector<f64>>,
    pub y_clean: Vec<DVector<f64>>,
    pub y_noisy: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
}

impl PlantTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn draw(factor: &DMatrix<f64>, rng: &mut impl rand::Rng) -> DVector<f64> {
    let z = DVector::from_iterator(factor.ncols(), (0..factor.ncols()).map(|_| StandardNormal.sample(rng)));
    factor * z
}

/// Fixed-step Euler rollout with additive Gaussian noise.
pub fn simulate_plant(setup: &PlantSetup) -> Result<PlantTrajectory, ModelError> {
    let (traj, err) = simulate_plant_partial(setup)?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Like [`simulate_plant`] but keeps the samples produced before a divergence.
pub fn simulate_plant_partial(
    setup: &PlantSetup,
) -> Result<(PlantTrajectory, Option<ModelError>), ModelError> {
    let case = setup.dynamics.case();
    let n = case.state_dim();
    check_len("initial state", n, setup.x0.len())?;
    check_len("input", case.input_dim(), setup.u.len())?;
    if !(setup.dt > 0.0 && setup.dt.is_finite()) {
        return Err(ModelError::InvalidStep(setup.dt));
    }
    let qf = noise_factor(&setup.q).map_err(|e| ModelError::Noise(format!("Q: {e}")))?;
    let rf = noise_factor(&setup.r).map_err(|e| ModelError::Noise(format!("R: {e}")))?;
    check_len("process noise", n, qf.nrows())?;
    check_len("measurement noise", case.output_dim(), rf.nrows())?;

    let mut rng = seeds::stream(setup.seed, seeds::PLANT_STREAM);
    let cap = setup.steps + 1;
    let mut traj = PlantTrajectory {
        t: Vec::with_capacity(cap),
        x: Vec::with_capacity(cap),
        y_clean: Vec::with_capacity(cap),
        y_noisy: Vec::with_capacity(cap),
        u: Vec::with_capacity(cap),
    };
    let names = case.state_names();
    let mut x = setup.x0.clone();
    let mut f = DVector::zeros(n);
    for k in 0..=setup.steps {
        let y = measurement(&x, case)?;
        let v = draw(&rf, &mut rng);
        traj.t.push(k as f64 * setup.dt);
        traj.y_noisy.push(&y + v);
        traj.y_clean.push(y);
        traj.u.push(setup.u.clone());
        traj.x.push(x.clone());
        if k == setup.steps {
            break;
        }
        setup.dynamics.rhs(x.as_slice(), setup.u.as_slice(), f.as_mut_slice());
        let w = draw(&qf, &mut rng);
        let mut next = &x + &f * setup.dt + w;
        if let Some(i) = next.iter().position(|v| !v.is_finite()) {
            let err = ModelError::Divergence { step: k + 1, component: names[i].clone() };
            return Ok((traj, Some(err)));
        }
        for (i, xi) in next.iter_mut().enumerate() {
            if case.is_concentration(i) && *xi < 0.0 {
                *xi = 0.0;
            }
        }
        x = next;
    }
    Ok((traj, None))
}
