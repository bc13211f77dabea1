use core::f64::consts::PI;
use lieccm::geodesics::{
    curve_energy, group_distance, group_geodesic, lemma1_check, matrix_log_rotation,
    minimize_energy, so_exp, ConstantMetric, InducedMetric, Metric, ScaledMetric,
};
use lieccm::synthesis::{synthesize, SynthesisOptions};
use lieccm::systems::builtin_system;
use lieccm::{EmbeddedManifold, Group, Matrix, SystemParams, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn hat(w: &[f64; 3]) -> Matrix {
    Matrix::from_row_slice(3, 3, &[0.0, -w[2], w[1], w[2], 0.0, -w[0], -w[1], w[0], 0.0])
}

/// Rotation by `angle` about the unit `axis`, written out (Rodrigues).
fn axis_angle(axis: &[f64; 3], angle: f64) -> Matrix {
    let k = hat(axis);
    Matrix::identity(3, 3) + &k * angle.sin() + &k * &k * (1.0 - angle.cos())
}

fn random_axis(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ];
        let n: f64 = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 0.1 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

fn so3_point(r: &Matrix) -> Vector {
    Vector::from_fn(9, |k, _| r[(k / 3, k % 3)])
}

#[test]
fn exp_log_round_trip_on_a_thousand_rotations() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let r = axis_angle(&random_axis(&mut rng), rng.random_range(0.0..PI - 0.1));
        let l = matrix_log_rotation(&r).unwrap();
        assert!((&l + l.transpose()).norm() < 1e-14);
        worst = worst.max((so_exp(&l) - &r).norm());
    }
    assert!(worst <= 1e-10, "{worst}");
}

#[test]
fn rodrigues_oracle_matches_exponential() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..100 {
        let axis = random_axis(&mut rng);
        let th = rng.random_range(0.0..3.0);
        let w = [axis[0] * th, axis[1] * th, axis[2] * th];
        assert!((so_exp(&hat(&w)) - axis_angle(&axis, th)).norm() < 1e-13);
    }
}

#[test]
fn quarter_turn_distance_and_midpoint() {
    let m = EmbeddedManifold::new(Group::SO3);
    let z = [0.0, 0.0, 1.0];
    let p = m.identity();
    let q = so3_point(&axis_angle(&z, PI / 2.0));
    let d = group_distance(&m, &p, &q).unwrap();
    assert!((d - 2f64.sqrt() * PI / 2.0).abs() <= 1e-8);
    let c = group_geodesic(&m, &p, &q, 3).unwrap();
    assert!((&c.points[1] - so3_point(&axis_angle(&z, PI / 4.0))).norm() < 1e-14);
    assert!((c.length - d).abs() < 1e-15);
}

#[test]
fn endpoints_and_samples_stay_exact() {
    let m = EmbeddedManifold::new(Group::SE3);
    let pts = m.sample_points(10, 3);
    for w in pts.windows(2) {
        let Ok(c) = group_geodesic(&m, &w[0], &w[1], 11) else {
            continue;
        };
        assert_eq!(c.points[0], w[0]);
        assert_eq!(c.points[10], w[1]);
        for x in &c.points {
            assert!(m.residual_norm(x).unwrap() <= 1e-10);
        }
    }
}

#[test]
fn induced_geodesic_is_already_minimal() {
    for group in [Group::SO3, Group::SE3] {
        let m = EmbeddedManifold::new(group);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let p = m.random_point(&mut rng);
            let q = m.random_point(&mut rng);
            let Ok(init) = group_geodesic(&m, &p, &q, 17) else {
                continue;
            };
            let c = minimize_energy(&m, &p, &q, &InducedMetric, 17, 200).unwrap();
            let drift: f64 = c
                .points
                .iter()
                .zip(&init.points)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            let initial_energy = {
                let c0 = minimize_energy(&m, &p, &q, &InducedMetric, 17, 0).unwrap();
                c0.energy
            };
            assert!(initial_energy - c.energy <= 1e-10);
            assert!(drift <= 1e-8, "{drift}");
        }
    }
}

#[test]
fn constant_metric_geodesics_in_the_plane_are_straight() {
    let m = EmbeddedManifold::new(Group::Euclidean(2));
    let metric = ConstantMetric(Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 9.0])));
    let p = Vector::from_vec(vec![0.0, 0.0]);
    let q = Vector::from_vec(vec![1.0, 2.0]);
    let c = minimize_energy(&m, &p, &q, &metric, 9, 500).unwrap();
    for (j, x) in c.points.iter().enumerate() {
        let s = j as f64 / 8.0;
        assert!((x - &q * s).norm() < 1e-8);
    }
    assert!((c.length - (1.0f64 + 36.0).sqrt()).abs() < 1e-10);
}

#[test]
fn straight_line_energy_is_squared_length() {
    let m = EmbeddedManifold::new(Group::Euclidean(3));
    let p = Vector::from_vec(vec![1.0, -1.0, 0.5]);
    let q = Vector::from_vec(vec![-2.0, 0.0, 2.5]);
    let c = group_geodesic(&m, &p, &q, 33).unwrap();
    let e = curve_energy(&m, &c.points, &InducedMetric).unwrap();
    assert!((e - (&q - &p).norm_squared()).abs() < 1e-12);
}

#[test]
fn uniform_speed_minimises_energy_among_reparameterisations() {
    let m = EmbeddedManifold::new(Group::SO3);
    let p = m.identity();
    let q = so3_point(&axis_angle(&[0.0, 0.6, 0.8], 1.2));
    let n = 65;
    let base = group_geodesic(&m, &p, &q, n).unwrap();
    let log = matrix_log_rotation(&axis_angle(&[0.0, 0.6, 0.8], 1.2)).unwrap();
    let uniform = curve_energy(&m, &base.points, &InducedMetric).unwrap();
    // Cauchy–Schwarz: E ≥ L² with equality only at constant speed.
    assert!((uniform - base.length * base.length).abs() < 1e-3 * uniform);
    for warp in [0.3, 0.6, 0.9] {
        let pts: Vec<Vector> = (0..n)
            .map(|j| {
                let s = j as f64 / (n - 1) as f64;
                let sw = s + warp * s * (1.0 - s);
                so3_point(&so_exp(&(&log * sw)))
            })
            .collect();
        assert!(curve_energy(&m, &pts, &InducedMetric).unwrap() > uniform);
    }
}

#[test]
fn certificate_metric_descent_never_increases_energy() {
    let sys = builtin_system("se3-heading", &SystemParams::default()).unwrap();
    let s = synthesize(&sys, 0.6, &SynthesisOptions::default()).unwrap();
    let cert = s.certificate().unwrap();
    let m = sys.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..3 {
        let p = m.random_point(&mut rng);
        let q = m.random_point(&mut rng);
        let Ok(c0) = minimize_energy(m, &p, &q, cert, 9, 0) else {
            continue;
        };
        let c = minimize_energy(m, &p, &q, cert, 9, 50).unwrap();
        assert!(c.energy <= c0.energy);
    }
}

fn so3_pairs(count: usize, seed: u64) -> Vec<(Vector, Vector)> {
    let m = EmbeddedManifold::new(Group::SO3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    while out.len() < count {
        let p = m.random_point(&mut rng);
        let q = m.random_point(&mut rng);
        if group_distance(&m, &p, &q).is_ok() {
            out.push((p, q));
        }
    }
    out
}

#[test]
fn uniform_scaling_doubles_distances() {
    let m = EmbeddedManifold::new(Group::SO3);
    let pairs = so3_pairs(50, 7);
    let g2 = ScaledMetric {
        inner: InducedMetric,
        factor: 4.0,
    };
    let r = lemma1_check(&m, &InducedMetric, &g2, 4.0, 4.0, &pairs, 9, 100).unwrap();
    assert!(r.premise_holds);
    assert!(r.pass, "{r:?}");
    for (d1, d2) in &r.distances {
        assert!((d2 / d1 - 2.0).abs() <= 1e-8);
    }
    let same = lemma1_check(&m, &InducedMetric, &InducedMetric, 1.0, 1.0, &pairs[..5], 9, 100).unwrap();
    assert!(same.pass);
    assert!(same.distances.iter().all(|(a, b)| a == b));
}

#[test]
fn violated_premise_is_reported() {
    let m = EmbeddedManifold::new(Group::SO3);
    let pairs = so3_pairs(3, 8);
    let g2 = ScaledMetric {
        inner: InducedMetric,
        factor: 4.0,
    };
    let r = lemma1_check(&m, &InducedMetric, &g2, 1.0, 2.0, &pairs, 5, 10).unwrap();
    assert!(!r.premise_holds);
    assert!(!r.pass);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn distance_is_symmetric(a in 0u64..1_000_000, b in 0u64..1_000_000) {
        let m = EmbeddedManifold::new(Group::SE3);
        let (p, q) = (m.random_point_seeded(a), m.random_point_seeded(b));
        if let (Ok(d1), Ok(d2)) = (group_distance(&m, &p, &q), group_distance(&m, &q, &p)) {
            prop_assert!((d1 - d2).abs() <= 1e-10);
        }
    }

    #[test]
    fn triangle_inequality(a in 0u64..1_000_000, b in 0u64..1_000_000, c in 0u64..1_000_000) {
        let m = EmbeddedManifold::new(Group::SO3);
        let (p, q, r) = (m.random_point_seeded(a), m.random_point_seeded(b), m.random_point_seeded(c));
        if let (Ok(pq), Ok(qr), Ok(pr)) = (group_distance(&m, &p, &q), group_distance(&m, &q, &r), group_distance(&m, &p, &r)) {
            prop_assert!(pr <= pq + qr + 1e-8);
        }
    }

    #[test]
    fn single_axis_length_law(seed in 0u64..1_000_000, th in 1e-3f64..(PI - 1e-3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axis = random_axis(&mut rng);
        let m = EmbeddedManifold::new(Group::SO3);
        let r0 = axis_angle(&random_axis(&mut rng), rng.random_range(0.0..3.0));
        let p = so3_point(&r0);
        let q = so3_point(&(&r0 * axis_angle(&axis, th)));
        let d = group_distance(&m, &p, &q).unwrap();
        prop_assert!((d - 2f64.sqrt() * th).abs() <= 1e-8 * (1.0 + th) / (PI - th).min(1.0));
    }

    #[test]
    fn midpoint_is_half_the_logarithm(a in 0u64..1_000_000, b in 0u64..1_000_000) {
        let m = EmbeddedManifold::new(Group::SO3);
        let (p, q) = (m.random_point_seeded(a), m.random_point_seeded(b));
        let r1 = Matrix::from_fn(3, 3, |i, j| p[3 * i + j]);
        let r2 = Matrix::from_fn(3, 3, |i, j| q[3 * i + j]);
        if let Ok(l) = matrix_log_rotation(&(r1.transpose() * &r2)) {
            let c = group_geodesic(&m, &p, &q, 3).unwrap();
            prop_assert_eq!(&c.points[1], &so3_point(&(&r1 * so_exp(&(&l * 0.5)))));
        }
    }
}

#[test]
fn metric_trait_objects_compose() {
    let m = EmbeddedManifold::new(Group::SO3);
    let x = m.random_point_seeded(1);
    let dyn_metric: &dyn Metric = &InducedMetric;
    let scaled = ScaledMetric {
        inner: dyn_metric,
        factor: 2.0,
    };
    let a = scaled.matrix(&m, &x).unwrap();
    let b = InducedMetric.matrix(&m, &x).unwrap() * 2.0;
    assert_eq!(a, b);
}
