use lieccm::controller::{
    ab_values, compute_controls, open_loop_step, rho_gain, sampled_data_run, DiscretizedPath,
    Reference, RunOptions, TabulatedReference,
};
use lieccm::geodesics::{curve_energy, group_geodesic};
use lieccm::synthesis::{
    synthesize, ContractionCertificate, LmiSpec, MetricParameterization, SynthesisOptions,
};
use lieccm::systems::builtin_system;
use lieccm::{ControlAffineSystem, EmbeddedManifold, Error, Matrix, SystemParams, Vector};
use proptest::prelude::*;

fn scalar() -> (ControlAffineSystem, ContractionCertificate) {
    let sys = builtin_system("scalar-linear", &SystemParams::default()).unwrap();
    let cert = ContractionCertificate::new(
        "scalar-linear",
        SystemParams::default(),
        LmiSpec::new(0.5),
        MetricParameterization::constant(Matrix::from_element(1, 1, 1.0), 0.0),
    );
    (sys, cert)
}

fn se3() -> (ControlAffineSystem, ContractionCertificate) {
    let sys = builtin_system("se3-heading", &SystemParams::default()).unwrap();
    let cert = synthesize(&sys, 0.2, &SynthesisOptions::default())
        .unwrap()
        .certificate()
        .unwrap()
        .clone();
    (sys, cert)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn gain_makes_the_energy_rate_negative(a in -50.0f64..50.0, b in 1e-6f64..50.0) {
        let rho = rho_gain(a, b).unwrap();
        prop_assert!(rho >= 0.0);
        if a != 0.0 {
            prop_assert!(a - rho * b < 0.0);
        }
        if a > 0.0 {
            prop_assert!(a - rho * b <= -(a * a + b * b).sqrt() * (1.0 - 1e-12));
        }
    }
}

#[test]
fn gain_with_zero_b() {
    assert_eq!(rho_gain(-2.0, 0.0).unwrap(), 0.0);
    assert!(matches!(rho_gain(1e-3, 1e-13), Err(Error::CertificateViolation { .. })));
}

#[test]
fn b_is_the_squared_input_projection() {
    let (sys, cert) = se3();
    let m = sys.manifold();
    for (i, x) in m.sample_points(20, 1).iter().enumerate() {
        let dx = m
            .tangent_projection(x, &Vector::from_fn(12, |k, _| ((i * 12 + k) as f64).sin()))
            .unwrap();
        let (_, b) = ab_values(&cert, &sys, x, &dx, 0.0).unwrap();
        let mm = cert.metric_at(m, x, 0.0).unwrap();
        let bb = sys.input_matrix(x, 0.0);
        let want = dx.dot(&(&mm * &bb * bb.transpose() * &mm * &dx));
        assert!((b - want).abs() <= 1e-12 * (1.0 + want));
    }
}

#[test]
fn scalar_energy_contracts_over_one_step() {
    let (sys, cert) = scalar();
    let m = sys.manifold();
    let dt = 1e-3;
    let x_ref = Vector::from_element(1, 0.2);
    let x = Vector::from_element(1, 1.4);
    let curve = group_geodesic(m, &x_ref, &x, 17).unwrap();
    let u = Vector::from_element(1, 0.3);
    let mut path = DiscretizedPath::new(curve.points, &u, 0.0).unwrap();
    let e0 = curve_energy(m, &path.nodes, &cert).unwrap();
    open_loop_step(&cert, &sys, &mut path, &u, dt).unwrap();
    let e1 = curve_energy(m, &path.nodes, &cert).unwrap();
    assert!(e1 <= e0 * (1.0 - 2.0 * 0.5 * dt) + 10.0 * dt * dt);
}

fn plant_control(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    m: &EmbeddedManifold,
    x_ref: &Vector,
    x: &Vector,
    n: usize,
) -> Vector {
    let u = Vector::from_vec(vec![0.1, 0.0, -0.1]);
    let curve = group_geodesic(m, x_ref, x, n + 1).unwrap();
    let mut path = DiscretizedPath::new(curve.points, &u, 0.0).unwrap();
    compute_controls(cert, sys, &mut path, &u).unwrap();
    path.plant_control().clone()
}

#[test]
fn plant_control_converges_under_path_refinement() {
    let (sys, cert) = se3();
    let m = sys.manifold();
    let x_ref = m.identity();
    let x = m.random_point_seeded(12);
    let fine = plant_control(&cert, &sys, m, &x_ref, &x, 512);
    let errs: Vec<f64> = [4, 8, 16, 32, 64]
        .iter()
        .map(|&n| (plant_control(&cert, &sys, m, &x_ref, &x, n) - &fine).norm())
        .collect();
    // Cauchy in N with (at least) first-order decay.
    for (k, e) in errs.iter().enumerate() {
        let n = 4.0 * 2f64.powi(k as i32);
        assert!(*e <= 4.0 * errs[0] * 4.0 / n + 1e-12, "{errs:?}");
    }
    assert!(errs[4] < errs[0]);
}

#[test]
fn scalar_plant_control_does_not_depend_on_the_path_resolution() {
    // Constant metric on a flat line: every segment carries the same gain.
    let (sys, cert) = scalar();
    let m = sys.manifold();
    let u = Vector::from_vec(vec![0.5]);
    let control = |n: usize| {
        let curve = group_geodesic(m, &Vector::from_vec(vec![0.0]), &Vector::from_vec(vec![2.0]), n + 1).unwrap();
        let mut path = DiscretizedPath::new(curve.points, &u, 0.0).unwrap();
        compute_controls(&cert, &sys, &mut path, &u).unwrap();
        path.plant_control()[0]
    };
    let one = control(1);
    for n in [2, 7, 64] {
        assert!((control(n) - one).abs() <= 1e-9 * (1.0 + one.abs()), "N = {n}");
    }
}

#[test]
fn scalar_run_decays_at_the_certified_rate() {
    let (sys, _) = scalar();
    let cert = synthesize(&sys, 0.5, &SynthesisOptions::default())
        .unwrap()
        .certificate()
        .unwrap()
        .clone();
    let u = Vector::from_element(1, 0.5);
    let reference = TabulatedReference::integrate(&sys, &Vector::zeros(1), &u, 1e-3, 10.0).unwrap();
    let opts = RunOptions::auto(&cert, 1e-3, 10.0).unwrap();
    let trace = sampled_data_run(&cert, &sys, &Vector::from_element(1, 2.0), &reference, &opts).unwrap();
    let slope = trace.log_distance_slope(0.0, 10.0).unwrap();
    assert!(slope <= -0.45, "{slope}");
    assert!(trace.times.windows(2).all(|w| w[1] > w[0]));
    assert!(trace.energies.iter().all(|e| *e >= 0.0));
    assert_eq!(*trace.times.last().unwrap(), 10.0);
}

#[test]
fn zero_initial_error_stays_on_the_reference() {
    let (sys, cert) = scalar();
    let u = Vector::from_element(1, -0.4);
    let x0 = Vector::from_element(1, 0.7);
    let reference = TabulatedReference::integrate(&sys, &x0, &u, 1e-3, 2.0).unwrap();
    let opts = RunOptions::auto(&cert, 1e-3, 2.0).unwrap();
    let trace = sampled_data_run(&cert, &sys, &x0, &reference, &opts).unwrap();
    assert!(trace.max_distance() <= 1e-6);
    assert!(trace.controls.iter().all(|c| c == &u));
}

#[test]
fn se3_run_tracks_with_decreasing_sample_energy() {
    let (sys, cert) = se3();
    let m = sys.manifold();
    let u = Vector::from_vec(vec![0.1, -0.2, 0.3]);
    let mut x_ref0 = m.identity();
    x_ref0[9] = 0.5;
    let reference = TabulatedReference::integrate(&sys, &x_ref0, &u, 1e-3, 10.0).unwrap();
    let opts = RunOptions {
        period: 2.0,
        ..RunOptions::auto(&cert, 1e-3, 10.0).unwrap()
    };
    let trace = sampled_data_run(&cert, &sys, &m.random_point_seeded(3), &reference, &opts).unwrap();
    assert!(trace.sample_energies.len() >= 5);
    assert!(trace.sample_energies.windows(2).all(|w| w[1] < w[0]));
    assert!(trace.second_half_slope().unwrap() <= -0.9 * cert.lambda());
    assert!(trace.max_residual() <= 1e-7);
    assert!(trace.k_estimate >= 1.0);
}

#[test]
fn infeasible_reference_is_rejected() {
    let (sys, cert) = scalar();
    let good = TabulatedReference::integrate(
        &sys,
        &Vector::zeros(1),
        &Vector::from_element(1, 1.0),
        1e-2,
        2.0,
    )
    .unwrap();
    // Same states, wrong recorded control.
    let bad = TabulatedReference::new(
        sys.manifold().clone(),
        good.times().to_vec(),
        good.states().to_vec(),
        vec![Vector::zeros(1); good.times().len()],
    )
    .unwrap();
    let opts = RunOptions::auto(&cert, 1e-2, 2.0).unwrap();
    assert!(matches!(
        sampled_data_run(&cert, &sys, &Vector::zeros(1), &bad, &opts),
        Err(Error::InfeasibleReference { .. })
    ));
    assert!(sampled_data_run(&cert, &sys, &Vector::zeros(1), &good, &opts).is_ok());
    assert_eq!(good.control(0.5).unwrap()[0], 1.0);
}
