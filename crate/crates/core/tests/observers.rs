use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cstr_swo::harness::Scenario;
use cstr_swo::linalg::{max_asymmetry, min_eigenvalue};
use cstr_swo::model::{simulate_plant, CaseId, DiscreteModel, PlantSetup, PlantTrajectory};
use cstr_swo::observers::{
    build_estimator, ekf_step, elo_step, gh_point_count, gh_points, init_estimator, pf_step, qkf_step,
    steady_state_gain, systematic_resample, ukf_sigma_points, ukf_step, EstimatorState, ObserverError,
    ObserverKind, ObserverParams, ParticleCloud, Resampling, StateModel, P0_FLOOR,
};

// Positive root of p^2 - p/4 - 1 = 0 and p / (p + 1), 40-digit reference arithmetic.
const SCALAR_P: f64 = 1.1327822185373187065;
const SCALAR_K: f64 = 0.53112887414927482618;

fn special_case(steps: usize) -> (Scenario, DiscreteModel, PlantTrajectory) {
    let s = Scenario { horizon: steps as f64 * 0.01, ..Scenario::for_case(CaseId::SpecialCase) };
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let plant = simulate_plant(&PlantSetup {
        dynamics: s.dynamics().unwrap(),
        dt: s.dt,
        steps,
        x0: s.initial_state(),
        u: s.input(),
        q: s.q_matrix(),
        r: s.r_matrix(),
        seed: 11,
    })
    .unwrap();
    (s, model, plant)
}

/// Plain Kalman filter on `x+ = Ad x + Bd u`, `y = C x`, Joseph-form update.
fn reference_kf(
    ad: &DMatrix<f64>,
    bd: &DMatrix<f64>,
    c: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    init: &EstimatorState,
    plant: &PlantTrajectory,
) -> Vec<DVector<f64>> {
    let n = ad.nrows();
    let mut x = init.x_hat.clone();
    let mut p = init.p.clone();
    let mut out = vec![x.clone()];
    for k in 1..plant.len() {
        let xp = ad * &x + bd * &plant.u[k - 1];
        let pp = ad * &p * ad.transpose() + q;
        let s = c * &pp * c.transpose() + r;
        let k_gain = &pp * c.transpose() * s.try_inverse().unwrap();
        x = &xp + &k_gain * (&plant.y_noisy[k] - c * &xp);
        let i_kc = DMatrix::identity(n, n) - &k_gain * c;
        p = &i_kc * pp * i_kc.transpose() + &k_gain * r * k_gain.transpose();
        out.push(x.clone());
    }
    out
}

fn linear_kf_gap(step: impl Fn(&EstimatorState, &DVector<f64>, &DVector<f64>) -> EstimatorState) -> f64 {
    let (s, model, plant) = special_case(1000);
    let cstr_swo::model::Dynamics::Linear(lin) = &model.dynamics else { unreachable!() };
    let ad = DMatrix::identity(3, 3) + &lin.a * s.dt;
    let bd = &lin.b * s.dt;
    let init = init_estimator(&s.initial_state(), s.init_std, &mut ChaCha8Rng::seed_from_u64(3));
    let want = reference_kf(&ad, &bd, &lin.c, &s.q_matrix(), &s.r_matrix(), &init, &plant);
    let mut state = init;
    let mut worst: f64 = 0.0;
    for k in 1..plant.len() {
        state = step(&state, &plant.u[k - 1], &plant.y_noisy[k]);
        worst = worst.max((&state.x_hat - &want[k]).amax());
    }
    worst
}

#[test]
fn ekf_equals_kalman_filter_on_linear_model() {
    let (s, model, _) = special_case(1);
    let (q, r) = (s.q_matrix(), s.r_matrix());
    let gap = linear_kf_gap(|st, u, y| ekf_step(st, u, y, &model, &q, &r).unwrap());
    assert!(gap < 1e-12, "gap {gap:e}");
}

#[test]
fn ukf_equals_kalman_filter_on_linear_model() {
    let (s, model, _) = special_case(1);
    let (q, r) = (s.q_matrix(), s.r_matrix());
    let gap = linear_kf_gap(|st, u, y| ukf_step(st, u, y, &model, &q, &r, (1.0, 2.0, 0.0)).unwrap());
    assert!(gap < 1e-6, "gap {gap:e}");
}

#[test]
fn qkf_equals_kalman_filter_on_linear_model() {
    let (s, model, _) = special_case(1);
    let (q, r) = (s.q_matrix(), s.r_matrix());
    let rule = gh_points(3, 3).unwrap();
    let gap = linear_kf_gap(|st, u, y| qkf_step(st, u, y, &model, &rule, &q, &r).unwrap());
    assert!(gap < 1e-6, "gap {gap:e}");
}

#[test]
fn scalar_riccati_fixed_point() {
    let one = DMatrix::from_element(1, 1, 1.0);
    let (k, p) = steady_state_gain(&DMatrix::from_element(1, 1, 0.5), &one, &one, &one).unwrap();
    assert!((p[(0, 0)] - SCALAR_P).abs() < 1e-12);
    assert!((k[(0, 0)] - SCALAR_K).abs() < 1e-12);
}

#[test]
fn riccati_without_process_noise_gives_zero_gain() {
    let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let (k, _) = steady_state_gain(&a, &c, &DMatrix::zeros(2, 2), &DMatrix::identity(1, 1)).unwrap();
    assert_eq!(k, DMatrix::zeros(2, 1));
}

#[test]
fn riccati_result_is_a_fixed_point() {
    let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.05, -0.02, 0.97]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, 0.0]);
    let q = DMatrix::identity(2, 2) * 0.01;
    let r = DMatrix::identity(1, 1) * 0.1;
    let (_, p) = steady_state_gain(&a, &c, &q, &r).unwrap();
    let s = &c * &p * c.transpose() + &r;
    let next = &a * (&p - &p * c.transpose() * s.try_inverse().unwrap() * &c * &p) * a.transpose() + &q;
    assert!((&next - &p).norm() <= 1e-11 * p.norm());
}

#[test]
fn riccati_reports_non_convergence() {
    // unstable mode the output cannot see
    let a = DMatrix::from_row_slice(2, 2, &[1.1, 0.0, 0.0, 0.5]);
    let c = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
    let err = steady_state_gain(&a, &c, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap_err();
    assert!(matches!(err, ObserverError::GainSynthesis(_)));
}

#[test]
fn elo_with_zero_gain_is_open_loop() {
    let (s, model, plant) = special_case(50);
    let gain = DMatrix::zeros(3, 1);
    let mut st = init_estimator(&s.initial_state(), 0.0, &mut ChaCha8Rng::seed_from_u64(0));
    let mut x = s.initial_state();
    for k in 1..plant.len() {
        st = elo_step(&st, &plant.u[k - 1], &plant.y_noisy[k - 1], &model, &gain).unwrap();
        x = model.step(&x, &plant.u[k - 1]).unwrap();
        assert_eq!(st.x_hat, x);
    }
}

#[test]
fn elo_correction_vanishes_on_zero_innovation() {
    let (s, model, _) = special_case(1);
    let st = init_estimator(&s.initial_state(), 0.01, &mut ChaCha8Rng::seed_from_u64(1));
    let y = model.observe_vec(&st.x_hat);
    let gain = DMatrix::from_element(3, 1, 0.7);
    let next = elo_step(&st, &s.input(), &y, &model, &gain).unwrap();
    assert_eq!(next.x_hat, model.transition_vec(&st.x_hat, &s.input()));
}

#[test]
fn ekf_ignores_measurements_it_distrusts() {
    let s = Scenario::for_case(CaseId::Case1);
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let st = init_estimator(&s.initial_state(), 0.01, &mut ChaCha8Rng::seed_from_u64(2));
    let y = DVector::from_vec(vec![0.5, 330.0, 360.0]);
    let r = s.r_matrix() * 1e20;
    let next = ekf_step(&st, &s.input(), &y, &model, &s.q_matrix(), &r).unwrap();
    let open = model.transition_vec(&st.x_hat, &s.input());
    assert!((next.x_hat - open).amax() < 1e-6);
}

#[test]
fn initial_estimate_follows_the_documented_draw() {
    let x0 = DVector::from_vec(vec![1.0, 0.0, 300.0]);
    let a = init_estimator(&x0, 0.01, &mut ChaCha8Rng::seed_from_u64(9));
    let b = init_estimator(&x0, 0.01, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(a, b);
    for i in 0..3 {
        let want = if a.x_hat[i] > 0.0 { a.x_hat[i] } else { P0_FLOOR };
        assert_eq!(a.p[(i, i)], want);
    }
    let exact = init_estimator(&x0, 0.0, &mut ChaCha8Rng::seed_from_u64(9));
    assert_eq!(exact.x_hat, x0);
    assert_eq!(exact.p[(1, 1)], P0_FLOOR);
    assert_eq!(exact.p[(0, 1)], 0.0);
}

#[test]
fn sigma_points_reproduce_mean_and_covariance() {
    let mean = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.0, -0.2, 0.1, -0.2, 0.5]);
    let sp = ukf_sigma_points(&mean, &cov, 1.0, 2.0, 0.0).unwrap();
    assert_eq!(sp.points.ncols(), 7);
    let m = &sp.points * &sp.wm;
    let mut c = DMatrix::zeros(3, 3);
    for (col, w) in sp.points.column_iter().zip(sp.wc.iter()) {
        let d = col - &m;
        c += &d * d.transpose() * *w;
    }
    assert!((m - &mean).amax() < 1e-12);
    // α = 1, β = 2 adds (1 - α² + β) d0 d0ᵀ with d0 = 0, so the covariance is exact
    assert!((c - cov).amax() < 1e-12);
    assert!((sp.wm.sum() - 1.0).abs() < 1e-12);
}

#[test]
fn quadrature_point_counts_are_powers_of_three() {
    assert_eq!(gh_point_count(5, 3), Some(243));
    assert_eq!(gh_point_count(10, 3), Some(59049));
    assert_eq!(gh_point_count(15, 3), Some(14_348_907));
    let rule = gh_points(5, 3).unwrap();
    assert_eq!(rule.len(), 243);
    assert!((rule.weights.sum() - 1.0).abs() < 1e-12);
    let mean = &rule.nodes * &rule.weights;
    assert!(mean.amax() < 1e-12);
    let mut second = DMatrix::zeros(5, 5);
    for (col, w) in rule.nodes.column_iter().zip(rule.weights.iter()) {
        second += col * col.transpose() * *w;
    }
    assert!((second - DMatrix::identity(5, 5)).amax() < 1e-12);
}

#[test]
fn quadrature_filter_refuses_the_three_reactor_train() {
    let s = Scenario::for_case(CaseId::Case3);
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let config = s.observer_config(&ObserverParams::default_for(ObserverKind::Qkf));
    let err = build_estimator(&config, &model, &s.initial_state(), &s.input(), ChaCha8Rng::seed_from_u64(0))
        .err()
        .unwrap();
    assert_eq!(err, ObserverError::Capacity { points: "3^15".into(), budget: 1_000_000 });
}

#[test]
fn filters_keep_covariances_symmetric_and_psd() {
    let s = Scenario::for_case(CaseId::Case1);
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let plant = simulate_plant(&PlantSetup {
        dynamics: s.dynamics().unwrap(),
        dt: s.dt,
        steps: 400,
        x0: s.initial_state(),
        u: s.input(),
        q: s.q_matrix(),
        r: s.r_matrix(),
        seed: 4,
    })
    .unwrap();
    for kind in [ObserverKind::Ekf, ObserverKind::Ukf, ObserverKind::Qkf] {
        let config = s.observer_config(&ObserverParams::default_for(kind));
        let mut est =
            build_estimator(&config, &model, &s.initial_state(), &s.input(), ChaCha8Rng::seed_from_u64(8)).unwrap();
        for k in 1..plant.len() {
            est.step(&model, &plant.u[k - 1], &plant.y_noisy[k - 1], &plant.y_noisy[k]).unwrap();
            let p = &est.state().p;
            assert_eq!(max_asymmetry(p), 0.0, "{kind} step {k}");
            assert!(min_eigenvalue(p) >= -1e-10, "{kind} step {k}");
        }
    }
}

#[test]
fn particle_weights_stay_normalized() {
    let s = Scenario::for_case(CaseId::Case1);
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cloud = ParticleCloud::sample(&s.initial_state(), 0.01, 200, &mut rng);
    let qf = s.q_matrix().map(f64::sqrt);
    let rc = s.r_matrix().map(f64::sqrt);
    let mut x = s.initial_state();
    for (step, schedule) in [Resampling::Never, Resampling::EssBelow(0.5), Resampling::Every].into_iter().cycle().take(60).enumerate() {
        x = model.step(&x, &s.input()).unwrap();
        let y = model.observe_vec(&x);
        let (_, diag) = pf_step(&mut cloud, step, &s.input(), &y, &model, &qf, &rc, schedule, &mut rng).unwrap();
        assert_eq!(cloud.len(), 200);
        assert!((cloud.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        assert!(cloud.weights.iter().all(|w| *w >= 0.0));
        let ess = diag.ess.unwrap();
        assert!((1.0 - 1e-9..=200.0 + 1e-9).contains(&ess));
    }
}

#[test]
fn particle_filter_survives_extreme_likelihoods() {
    let s = Scenario::for_case(CaseId::Case1);
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut cloud = ParticleCloud::sample(&s.initial_state(), 0.01, 50, &mut rng);
    let qf = s.q_matrix().map(f64::sqrt);
    let rc = s.r_matrix().map(f64::sqrt);

    // far-off data: every likelihood underflows in linear space but not in log space
    let y = DVector::from_vec(vec![1e3, 1e3, 1e3]);
    let (st, diag) = pf_step(&mut cloud, 0, &s.input(), &y, &model, &qf, &rc, Resampling::Never, &mut rng).unwrap();
    assert!(!diag.weight_collapse);
    assert!((cloud.weights.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    assert!(st.x_hat.iter().all(|v| v.is_finite()));

    // no usable likelihood at all: uniform reset and a flag
    let y = DVector::from_vec(vec![f64::NAN; 3]);
    let (st, diag) = pf_step(&mut cloud, 1, &s.input(), &y, &model, &qf, &rc, Resampling::Never, &mut rng).unwrap();
    assert!(diag.weight_collapse);
    assert!(cloud.weights.iter().all(|w| *w == 1.0 / 50.0));
    assert!(st.x_hat.iter().all(|v| v.is_finite()));
}

#[test]
fn too_few_particles_is_an_error() {
    let s = Scenario::for_case(CaseId::Case1);
    let model = DiscreteModel::new(s.dynamics().unwrap(), s.dt).unwrap();
    let params = ObserverParams::Pf { particles: 1, resampling: Resampling::Every };
    let res = build_estimator(&s.observer_config(&params), &model, &s.initial_state(), &s.input(), ChaCha8Rng::seed_from_u64(0));
    assert_eq!(res.err().unwrap(), ObserverError::TooFewParticles(1));
}

#[test]
fn observer_params_parse_from_json() {
    let p: ObserverParams = serde_json::from_str(r#"{"kind":"UKF","alpha":0.5}"#).unwrap();
    assert_eq!(p, ObserverParams::Ukf { alpha: 0.5, beta: 2.0, kappa: 0.0 });
    let p: ObserverParams = serde_json::from_str(r#"{"kind":"PF","resampling":{"ess_below":0.5}}"#).unwrap();
    assert_eq!(p, ObserverParams::Pf { particles: 500, resampling: Resampling::EssBelow(0.5) });
    assert!(serde_json::from_str::<ObserverParams>(r#"{"kind":"UKF","gamma":1}"#).is_err());
    assert!(serde_json::from_str::<ObserverParams>(r#"{"kind":"EKF","gain":1}"#).is_err());
}

proptest! {
    #[test]
    fn systematic_resampling_counts_are_within_one(
        raw in proptest::collection::vec(0.0f64..1.0, 1..60),
        u0 in 0.0f64..1.0,
    ) {
        let total: f64 = raw.iter().sum();
        prop_assume!(total > 1e-6);
        let n = raw.len();
        let idx = systematic_resample(&raw, u0);
        prop_assert_eq!(idx.len(), n);
        prop_assert!(idx.windows(2).all(|w| w[0] <= w[1]));
        for (i, w) in raw.iter().enumerate() {
            let expected = n as f64 * w / total;
            let got = idx.iter().filter(|&&j| j == i).count() as f64;
            prop_assert!((got - expected).abs() < 1.0 + 1e-9, "index {} expected {} got {}", i, expected, got);
        }
    }

    #[test]
    fn sigma_point_weights_sum_to_one(alpha in 0.1f64..1.5, kappa in 0.0f64..3.0, n in 1usize..6) {
        let sp = ukf_sigma_points(&DVector::zeros(n), &DMatrix::identity(n, n), alpha, 2.0, kappa).unwrap();
        prop_assert!((sp.wm.sum() - 1.0).abs() < 1e-9);
        prop_assert_eq!(sp.points.ncols(), 2 * n + 1);
    }
}
