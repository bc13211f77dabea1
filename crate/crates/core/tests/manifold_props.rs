use lieccm::linalg::{max_eigenvalue, min_eigenvalue, spd_inverse};
use lieccm::manifold::MANIFOLD_TOL;
use lieccm::{EmbeddedManifold, Group, Matrix, Vector};
use proptest::prelude::*;

fn frame_error(group: Group, seed: u64, count: usize) -> f64 {
    let m = EmbeddedManifold::new(group);
    let eye = Matrix::identity(m.n_dim(), m.n_dim());
    m.sample_points(count, seed)
        .iter()
        .map(|x| {
            let s = m.frame(x).unwrap();
            (s.transpose() * &s - &eye).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn frames_are_orthonormal_on_all_groups() {
    for g in [Group::O2xR, Group::SO3, Group::SE3] {
        assert!(frame_error(g, 11, 1000) <= 1e-12, "{g:?}");
    }
}

#[test]
fn frame_spans_the_constraint_kernel() {
    for g in [Group::O2xR, Group::SO3, Group::SE3] {
        let m = EmbeddedManifold::new(g);
        for x in m.sample_points(50, 5) {
            let s = m.frame(&x).unwrap();
            let j = m.constraint_jacobian(&x).unwrap();
            assert!((&j * &s).norm() < 1e-12);
            assert_eq!(j.nrows() + s.ncols(), m.n_amb());
        }
    }
}

#[test]
fn projector_is_a_left_inverse_of_the_frame() {
    let m = EmbeddedManifold::new(Group::SE3);
    for x in m.sample_points(20, 9) {
        let s = m.frame(&x).unwrap();
        let p = m.projector(&x).unwrap();
        assert!((p.transpose() * &s - Matrix::identity(6, 6)).norm() < 1e-12);
    }
}

fn group_strategy() -> impl Strategy<Value = Group> {
    prop_oneof![Just(Group::O2xR), Just(Group::SO3), Just(Group::SE3)]
}

proptest! {
    #[test]
    fn retraction_lands_on_the_manifold(group in group_strategy(), seed in 0u64..10_000, scale in 0.0f64..0.2) {
        let m = EmbeddedManifold::new(group);
        let x = m.random_point_seeded(seed);
        let noise = Vector::from_fn(m.n_amb(), |i, _| ((i as f64 + seed as f64) * 1.7).sin() * scale);
        let y = m.retract(&(&x + noise)).unwrap();
        prop_assert!(m.residual_norm(&y).unwrap() <= MANIFOLD_TOL);
        prop_assert_eq!(m.component_of(&y), m.component_of(&x));
    }

    #[test]
    fn retraction_fixes_points_on_the_manifold(group in group_strategy(), seed in 0u64..10_000) {
        let m = EmbeddedManifold::new(group);
        let x = m.random_point_seeded(seed);
        prop_assert!((m.retract(&x).unwrap() - &x).norm() < 1e-12);
    }

    #[test]
    fn tangent_projection_is_idempotent(seed in 0u64..10_000) {
        let m = EmbeddedManifold::new(Group::SE3);
        let x = m.random_point_seeded(seed);
        let v = Vector::from_fn(12, |i, _| (i as f64 * 0.37 + seed as f64).cos());
        let p1 = m.tangent_projection(&x, &v).unwrap();
        let p2 = m.tangent_projection(&x, &p1).unwrap();
        prop_assert!((p1 - p2).norm() < 1e-12);
    }

    // a₁I ⪯ W⁻¹ ⪯ a₂I  ⇔  I/a₂ ⪯ W ⪯ I/a₁
    #[test]
    fn bound_duality(entries in proptest::collection::vec(-1.0f64..1.0, 9), shift in 0.05f64..3.0, a1 in 0.05f64..2.0, ratio in 1.0f64..20.0) {
        let a = Matrix::from_row_slice(3, 3, &entries);
        let w = &a * a.transpose() + Matrix::identity(3, 3) * shift;
        let a2 = a1 * ratio;
        let w_inv = spd_inverse(&w).unwrap();
        let tol = 1e-9;
        let primal = min_eigenvalue(&w_inv) >= a1 - tol * a1 && max_eigenvalue(&w_inv) <= a2 + tol * a2;
        let dual = min_eigenvalue(&w) >= 1.0 / a2 - tol / a2 && max_eigenvalue(&w) <= 1.0 / a1 + tol / a1;
        let lo = min_eigenvalue(&w_inv);
        let hi = max_eigenvalue(&w_inv);
        let near = |v: f64, b: f64| (v - b).abs() <= 1e-8 * b;
        if !(near(lo, a1) || near(hi, a2)) {
            prop_assert_eq!(primal, dual);
        }
    }
}
