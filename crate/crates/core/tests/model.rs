use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use cstr_swo::linalg::central_jacobian;
use cstr_swo::model::{
    arrhenius_rate, euler_step, linear_dynamics, linearize, measurement, simulate_plant, CaseId, Dynamics, Jet,
    ModelError, PlantParams, PlantSetup,
};

// k0 exp(-E/(Rg T)) at the default constants, 40-digit reference arithmetic.
const ARRHENIUS_300: f64 = 0.025904323433029565954;
const ARRHENIUS_350: f64 = 0.28455874220895000339;
const ARRHENIUS_400: f64 = 1.7170055205368481799;

fn noiseless(case: CaseId, params: PlantParams, x0: DVector<f64>, dt: f64, steps: usize) -> Vec<DVector<f64>> {
    let setup = PlantSetup {
        dynamics: Dynamics::nonlinear(case, params.clone()).unwrap(),
        dt,
        steps,
        x0,
        u: params.input(case),
        q: DMatrix::zeros(case.state_dim(), case.state_dim()),
        r: DMatrix::zeros(case.output_dim(), case.output_dim()),
        seed: 0,
    };
    simulate_plant(&setup).unwrap().x
}

fn exact_jacobian(dynamics: &Dynamics, x: &[f64], u: &[f64]) -> DMatrix<f64> {
    let n = x.len();
    let xs: Vec<Jet> = x.iter().enumerate().map(|(i, &v)| Jet::variable(v, 1, n, i)).collect();
    let mut out = vec![Jet::constant(0.0, 1, n); n];
    dynamics.rhs(&xs, u, &mut out);
    DMatrix::from_fn(n, n, |i, j| out[i].d[j].c[0])
}

#[test]
fn arrhenius_matches_reference_values() {
    let p = PlantParams::default();
    for (t, want) in [(300.0, ARRHENIUS_300), (350.0, ARRHENIUS_350), (400.0, ARRHENIUS_400)] {
        let got = arrhenius_rate(t, &p).unwrap();
        assert!((got - want).abs() <= 1e-14 * want, "T={t}: {got} vs {want}");
    }
}

#[test]
fn arrhenius_rejects_nonpositive_temperature() {
    let p = PlantParams::default();
    assert!(matches!(arrhenius_rate(0.0, &p), Err(ModelError::NonPositiveTemperature(_))));
    assert!(arrhenius_rate(-5.0, &p).is_err());
}

#[test]
fn case_one_rhs_matches_hand_balances() {
    let p = PlantParams::default();
    let x = DVector::from_vec(vec![0.7, 0.4, 0.2, 320.0, 360.0]);
    let u = p.input(CaseId::Case1);
    let got = Dynamics::nonlinear(CaseId::Case1, p.clone()).unwrap().eval(&x, &u).unwrap();

    let k = 5.0e5 * (-1.0e4 / (1.987 * 320.0f64)).exp();
    let r = k * 0.7 * 0.4;
    let q = 12.0 / 100.0;
    let want = [
        6.0 * 1.0 / 100.0 - q * 0.7 - r,
        6.0 * 0.8 / 100.0 - q * 0.4 - r,
        r - q * 0.2,
        q * (300.0 - 320.0) - (-4.0e4) / (1.0e3 * 4.18) * r + 1.0e5 / (1.0e3 * 4.18 * 100.0) * (360.0 - 320.0),
        30.0 / 50.0 * (370.0 - 360.0) - 1.0e5 / (1.0e3 * 4.18 * 50.0) * (360.0 - 320.0),
    ];
    for i in 0..5 {
        assert!((got[i] - want[i]).abs() < 1e-12 * want[i].abs().max(1.0), "component {i}");
    }
}

#[test]
fn downstream_reactor_is_fed_by_upstream_outflow() {
    let p = PlantParams::default();
    let mut x = CaseId::Case2.default_initial_state();
    x[0] = 0.9;
    x[1] = 0.6;
    x[3] = 310.0;
    let f = Dynamics::nonlinear(CaseId::Case2, p.clone()).unwrap().eval(&x, &p.input(CaseId::Case2)).unwrap();
    let q = p.fi / p.v;
    // reactor 2 is empty, so only inflow and heat exchange act on it
    assert!((f[5] - q * 0.9).abs() < 1e-15);
    assert!((f[6] - q * 0.6).abs() < 1e-15);
    assert_eq!(f[7], 0.0);
}

#[test]
fn linear_model_is_affine_with_zero_origin() {
    let p = PlantParams::default();
    let m = linearize(
        &CaseId::SpecialCase.default_initial_state(),
        &p.input(CaseId::SpecialCase),
        300.0,
        &p,
    )
    .unwrap();
    let zero = linear_dynamics(&DVector::zeros(3), &DVector::zeros(3), &m).unwrap();
    assert_eq!(zero, DVector::zeros(3));
    assert_eq!(m.c, DMatrix::from_row_slice(1, 3, &[0.0, 0.0, 1.0]));
    assert!(m.b.row(2).iter().all(|&v| v == 0.0));
}

#[test]
fn linearization_matches_the_nonlinear_jacobian() {
    let p = PlantParams::default();
    let x_op = DVector::from_vec(vec![0.6, 0.45, 0.2]);
    let m = linearize(&x_op, &p.input(CaseId::SpecialCase), 300.0, &p).unwrap();
    let dynamics = Dynamics::nonlinear(CaseId::Case1, p.clone()).unwrap();
    let x = [0.6, 0.45, 0.2, 300.0, 370.0];
    let jac = exact_jacobian(&dynamics, &x, p.input(CaseId::Case1).as_slice());
    let block = jac.view((0, 0), (3, 3));
    assert!((block - &m.a).amax() < 1e-14);
}

#[test]
fn exact_jacobian_agrees_with_central_differences() {
    let p = PlantParams::default();
    for case in [CaseId::Case1, CaseId::Case2, CaseId::Case3] {
        let dynamics = Dynamics::nonlinear(case, p.clone()).unwrap();
        let mut x = case.default_initial_state();
        for (i, v) in x.iter_mut().enumerate() {
            if case.is_concentration(i) {
                *v += 0.3 + 0.01 * i as f64;
            }
        }
        let u = p.input(case);
        let exact = exact_jacobian(&dynamics, x.as_slice(), u.as_slice());
        let fd = central_jacobian(x.as_slice(), x.len(), 1e-6, |xp, o| dynamics.rhs(xp, u.as_slice(), o));
        let rel = (&exact - &fd).amax() / exact.amax();
        assert!(rel < 1e-6, "{case}: relative Jacobian gap {rel:e}");
    }
}

#[test]
fn euler_converges_at_first_order() {
    let p = PlantParams::default();
    let x0 = CaseId::Case1.default_initial_state();
    let horizon = 2.0;
    let at = |dt: f64| noiseless(CaseId::Case1, p.clone(), x0.clone(), dt, (horizon / dt).round() as usize);
    let reference = at(1e-5).pop().unwrap();
    let coarse = at(0.02).pop().unwrap();
    let fine = at(0.01).pop().unwrap();
    let ratio = (coarse - &reference).norm() / (fine - &reference).norm();
    assert!((1.7..=2.3).contains(&ratio), "ratio {ratio}");
}

#[test]
fn symmetric_feed_keeps_a_and_b_equal() {
    let p = PlantParams { cb0: 1.0, ..PlantParams::default() };
    for case in [CaseId::Case1, CaseId::Case2, CaseId::Case3] {
        let xs = noiseless(case, p.clone(), case.default_initial_state(), 0.01, 2000);
        for x in &xs {
            for r in 0..case.reactors() {
                assert!((x[5 * r] - x[5 * r + 1]).abs() <= 1e-12, "{case} reactor {}", r + 1);
            }
        }
    }
}

#[test]
fn plant_is_deterministic_per_seed() {
    let case = CaseId::Case2;
    let p = PlantParams::default();
    let (qv, rv) = case.default_noise();
    let setup = |seed| PlantSetup {
        dynamics: Dynamics::nonlinear(case, p.clone()).unwrap(),
        dt: 0.01,
        steps: 300,
        x0: case.default_initial_state(),
        u: p.input(case),
        q: DMatrix::identity(10, 10) * qv,
        r: DMatrix::identity(7, 7) * rv,
        seed,
    };
    let a = simulate_plant(&setup(5)).unwrap();
    let b = simulate_plant(&setup(5)).unwrap();
    let c = simulate_plant(&setup(6)).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.y_noisy, c.y_noisy);
    assert_eq!(a.len(), 301);
    assert!(a.x.iter().flat_map(|x| (0..10).filter(|i| i % 5 < 3).map(move |i| x[i])).all(|c| c >= 0.0));
}

#[test]
fn zero_step_is_identity_and_bad_steps_fail() {
    let p = PlantParams::default();
    let d = Dynamics::nonlinear(CaseId::Case1, p.clone()).unwrap();
    let x = CaseId::Case1.default_initial_state();
    let u = p.input(CaseId::Case1);
    assert_eq!(euler_step(&x, &u, 0.0, &d).unwrap(), x);
    assert!(matches!(euler_step(&x, &u, f64::NAN, &d), Err(ModelError::InvalidStep(_))));
    assert!(euler_step(&DVector::zeros(4), &u, 0.01, &d).is_err());
}

#[test]
fn measurement_selects_the_documented_channels() {
    let x = DVector::from_fn(15, |i, _| i as f64);
    let y = measurement(&x, CaseId::Case3).unwrap();
    assert_eq!(y.as_slice(), &[3.0, 4.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0]);
    assert_eq!(CaseId::Case2.output_names(), ["T1", "Tj1", "CA2", "CB2", "CC2", "T2", "Tj2"]);
    assert_eq!(CaseId::SpecialCase.state_dim(), 3);
    assert!(measurement(&x, CaseId::Case1).is_err());
}

#[test]
fn invalid_parameters_are_rejected() {
    let p = PlantParams { v: 0.0, ..PlantParams::default() };
    assert!(matches!(Dynamics::nonlinear(CaseId::Case1, p), Err(ModelError::InvalidParams(_))));
    assert!(Dynamics::nonlinear(CaseId::SpecialCase, PlantParams::default()).is_err());
}

proptest! {
    #[test]
    fn arrhenius_is_positive_and_increasing(t in 200.0f64..600.0, dt in 0.1f64..50.0) {
        let p = PlantParams::default();
        let a = arrhenius_rate(t, &p).unwrap();
        let b = arrhenius_rate(t + dt, &p).unwrap();
        prop_assert!(a > 0.0 && b > a);
    }

    #[test]
    fn concentrations_never_go_negative_in_the_plant(seed in 0u64..1000) {
        let case = CaseId::Case1;
        let p = PlantParams::default();
        let setup = PlantSetup {
            dynamics: Dynamics::nonlinear(case, p.clone()).unwrap(),
            dt: 0.01,
            steps: 200,
            x0: DVector::from_vec(vec![1e-4, 1e-4, 0.0, 300.0, 370.0]),
            u: p.input(case),
            q: DMatrix::identity(5, 5) * 1e-6,
            r: DMatrix::identity(3, 3) * 1e-6,
            seed,
        };
        let traj = simulate_plant(&setup).unwrap();
        for x in &traj.x {
            prop_assert!(x[0] >= 0.0 && x[1] >= 0.0 && x[2] >= 0.0);
        }
    }

    #[test]
    fn measurement_is_a_selection(v in proptest::collection::vec(-10.0f64..10.0, 10)) {
        let x = DVector::from_vec(v);
        let y = measurement(&x, CaseId::Case2).unwrap();
        for (k, &i) in CaseId::Case2.output_indices().iter().enumerate() {
            prop_assert_eq!(y[k], x[i]);
        }
    }
}
