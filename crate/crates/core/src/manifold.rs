//! Matrix Lie groups of the form `G × ℝˡ`, `G ⊂ O(μ)`, viewed as the zero
//! set of a constraint map inside `ℝ^{μ²+l}`.
//!
//! Ambient layout: the rotation block is stored row-major in the first `μ²`
//! coordinates, the vector factor in the remaining `l`. Tangent frames list
//! the vector directions first and the left-invariant rotation fields
//! `vec(R·Ê_k)` after them, so that O(2)×ℝ and SE(3) reproduce the usual
//! block frames `[e₅, vec(RÊ)]` and `[[0, S_r], [I₃, 0]]`.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};


use crate::error::{check_len, Error, Result};
use crate::linalg::{
    operator_norm, polar_factor, rotation_block, skew_basis, spd_inverse, vec_row_major,
    write_rotation_block, Matrix, Vector,
};

/// Largest constraint residual accepted for an "on-manifold" point.
pub const MANIFOLD_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Group {
    /// ℝⁿ: no constraints, identity frame.
    Euclidean(usize),
    /// O(2)×ℝ embedded in ℝ⁵.
    O2xR,
    /// SO(3) embedded in ℝ⁹.
    SO3,
    /// SE(3) ≅ SO(3)×ℝ³ embedded in ℝ¹².
    SE3,
}

impl Group {
    /// Parses `"rn"`, `"o2xr"`, `"so3"` or `"se3"`. `"rn"` needs the
    /// Euclidean dimension.
    pub fn parse(name: &str, euclidean_dim: Option<usize>) -> Result<Self> {
        match name {
            "rn" => match euclidean_dim {
                Some(n) if n > 0 => Ok(Group::Euclidean(n)),
                _ => Err(Error::InvalidParameter {
                    name: "dimension",
                    reason: "group `rn` needs a positive dimension".into(),
                }),
            },
            "o2xr" => Ok(Group::O2xR),
            "so3" => Ok(Group::SO3),
            "se3" => Ok(Group::SE3),
            other => Err(Error::UnknownName(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Group::Euclidean(_) => "rn",
            Group::O2xR => "o2xr",
            Group::SO3 => "so3",
            Group::SE3 => "se3",
        }
    }

    /// Size `μ` of the rotation block (0 when absent).
    pub fn rotation_order(&self) -> usize {
        match self {
            Group::Euclidean(_) => 0,
            Group::O2xR => 2,
            Group::SO3 | Group::SE3 => 3,
        }
    }

    pub fn vector_len(&self) -> usize {
        match self {
            Group::Euclidean(n) => *n,
            Group::O2xR => 1,
            Group::SO3 => 0,
            Group::SE3 => 3,
        }
    }

    /// Whether the rotation factor is restricted to `det = +1`.
    pub fn is_special(&self) -> bool {
        matches!(self, Group::SO3 | Group::SE3)
    }
}

/// Connected component of the rotation factor (only meaningful for O(2)).
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Component {
    #[default]
    Identity,
    Reflection,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedManifold {
    group: Group,
    generators: Vec<Matrix>,
}

impl EmbeddedManifold {
    pub fn new(group: Group) -> Self {
        Self {
            group,
            generators: skew_basis(group.rotation_order()),
        }
    }

    pub fn by_name(name: &str, euclidean_dim: Option<usize>) -> Result<Self> {
        Group::parse(name, euclidean_dim).map(Self::new)
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn name(&self) -> &'static str {
        self.group.name()
    }

    fn rot_len(&self) -> usize {
        let mu = self.group.rotation_order();
        mu * mu
    }

    pub fn n_amb(&self) -> usize {
        self.rot_len() + self.group.vector_len()
    }

    /// Number of independent scalar constraints.
    pub fn n_con(&self) -> usize {
        let mu = self.group.rotation_order();
        mu * (mu + 1) / 2
    }

    pub fn n_dim(&self) -> usize {
        self.n_amb() - self.n_con()
    }

    /// Orthonormal skew basis `Ê_k` behind the rotation columns of the frame.
    pub fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    fn check_point(&self, x: &Vector) -> Result<()> {
        check_len("ambient point", self.n_amb(), x.len())
    }

    /// Index pairs of `RᵀR − I` used as constraints: diagonal first, then
    /// the strict upper triangle.
    fn constraint_pairs(&self) -> Vec<(usize, usize)> {
        let mu = self.group.rotation_order();
        let mut pairs: Vec<(usize, usize)> = (0..mu).map(|i| (i, i)).collect();
        for i in 0..mu {
            for j in (i + 1)..mu {
                pairs.push((i, j));
            }
        }
        pairs
    }

    pub fn rotation_part(&self, x: &Vector) -> Option<Matrix> {
        let mu = self.group.rotation_order();
        (mu > 0).then(|| rotation_block(x, mu))
    }

    pub fn vector_part(&self, x: &Vector) -> Vector {
        x.rows(self.rot_len(), self.group.vector_len()).into_owned()
    }

    /// Packs a rotation block and a vector factor into an ambient point.
    pub fn assemble(&self, rotation: Option<&Matrix>, vector: &Vector) -> Result<Vector> {
        check_len("vector factor", self.group.vector_len(), vector.len())?;
        let mut x = Vector::zeros(self.n_amb());
        let mu = self.group.rotation_order();
        match rotation {
            Some(r) if mu > 0 => {
                check_len("rotation block", mu, r.nrows())?;
                check_len("rotation block", mu, r.ncols())?;
                write_rotation_block(&mut x, r);
            }
            None if mu == 0 => {}
            _ => {
                return Err(Error::InvalidInput(
                    "rotation block does not match the group".into(),
                ))
            }
        }
        x.rows_mut(self.rot_len(), vector.len()).copy_from(vector);
        Ok(x)
    }

    /// The group identity (`R = I`, vector factor zero).
    pub fn identity(&self) -> Vector {
        let mut x = Vector::zeros(self.n_amb());
        let mu = self.group.rotation_order();
        for i in 0..mu {
            x[i * mu + i] = 1.0;
        }
        x
    }

    /// `h(x)`: independent entries of `RᵀR − I`.
    pub fn constraint_residual(&self, x: &Vector) -> Result<Vector> {
        self.check_point(x)?;
        let Some(r) = self.rotation_part(x) else {
            return Ok(Vector::zeros(0));
        };
        let gram = r.transpose() * &r;
        let pairs = self.constraint_pairs();
        Ok(Vector::from_iterator(
            pairs.len(),
            pairs
                .iter()
                .map(|&(i, j)| gram[(i, j)] - if i == j { 1.0 } else { 0.0 }),
        ))
    }

    pub fn residual_norm(&self, x: &Vector) -> Result<f64> {
        Ok(self.constraint_residual(x)?.norm())
    }

    /// `∂h/∂x`, `n_con × n_amb`.
    pub fn constraint_jacobian(&self, x: &Vector) -> Result<Matrix> {
        self.check_point(x)?;
        let mu = self.group.rotation_order();
        let pairs = self.constraint_pairs();
        let mut jac = Matrix::zeros(pairs.len(), self.n_amb());
        // (RᵀR)_{ij} = Σ_a R_ai R_aj
        for (row, &(i, j)) in pairs.iter().enumerate() {
            for a in 0..mu {
                jac[(row, a * mu + i)] += x[a * mu + j];
                jac[(row, a * mu + j)] += x[a * mu + i];
            }
        }
        Ok(jac)
    }

    fn require_on_manifold(&self, x: &Vector) -> Result<()> {
        let residual = self.residual_norm(x)?;
        if residual <= MANIFOLD_TOL {
            Ok(())
        } else {
            Err(Error::OffManifold { residual })
        }
    }

    /// Tangent frame `S(x)`, `n_amb × n_dim`.
    pub fn frame(&self, x: &Vector) -> Result<Matrix> {
        self.require_on_manifold(x)?;
        let rot = self.rot_len();
        let l = self.group.vector_len();
        let mut s = Matrix::zeros(self.n_amb(), self.n_dim());
        for i in 0..l {
            s[(rot + i, i)] = 1.0;
        }
        if let Some(r) = self.rotation_part(x) {
            for (k, gen) in self.generators.iter().enumerate() {
                s.view_mut((0, l + k), (rot, 1))
                    .copy_from(&vec_row_major(&(&r * gen)));
            }
        }
        Ok(s)
    }

    /// `P_S = S(SᵀS)⁻¹`.
    pub fn projector(&self, x: &Vector) -> Result<Matrix> {
        projector_from_frame(&self.frame(x)?)
    }

    /// Orthogonal projection of an ambient vector onto `T_xM`.
    pub fn tangent_projection(&self, x: &Vector, v: &Vector) -> Result<Vector> {
        check_len("ambient vector", self.n_amb(), v.len())?;
        let s = self.frame(x)?;
        let p = projector_from_frame(&s)?;
        Ok(p * (s.transpose() * v))
    }

    /// Nearest-point projection onto the manifold: polar factor of the
    /// rotation block, identity on the vector factor.
    pub fn retract(&self, y: &Vector) -> Result<Vector> {
        self.check_point(y)?;
        let mut x = y.clone();
        if let Some(r) = self.rotation_part(y) {
            let q = polar_factor(&r, self.group.is_special())?;
            write_rotation_block(&mut x, &q);
        }
        Ok(x)
    }

    /// Seeded sample in the identity component.
    pub fn random_point<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        self.random_point_in(rng, Component::Identity)
    }

    /// Haar-distributed rotation factor (Gram–Schmidt of a Gaussian matrix
    /// with sign and determinant correction) and a standard Gaussian vector
    /// factor. `Component::Reflection` is only honoured on O(2)×ℝ.
    pub fn random_point_in<R: Rng + ?Sized>(&self, rng: &mut R, component: Component) -> Vector {
        let mu = self.group.rotation_order();
        let mut x = Vector::zeros(self.n_amb());
        if mu > 0 {
            let mut q = haar_orthogonal(rng, mu);
            let want_negative =
                !self.group.is_special() && component == Component::Reflection;
            let negative = q.determinant() < 0.0;
            if negative != want_negative {
                for r in 0..mu {
                    q[(r, 0)] = -q[(r, 0)];
                }
            }
            write_rotation_block(&mut x, &q);
        }
        let rot = self.rot_len();
        for i in 0..self.group.vector_len() {
            x[rot + i] = StandardNormal.sample(rng);
        }
        x
    }

    /// `count` points from a ChaCha stream seeded with `seed`.
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..count).map(|_| self.random_point(&mut rng)).collect()
    }

    pub fn random_point_seeded(&self, seed: u64) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.random_point(&mut rng)
    }

    /// `c_S = max ‖S(SᵀS)⁻¹‖₂` over the given samples.
    pub fn frame_bound(&self, samples: &[Vector]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for x in samples {
            worst = worst.max(operator_norm(&self.projector(x)?));
        }
        Ok(worst)
    }

    /// Sign of the rotation block determinant (`+1` without rotation block).
    pub fn component_of(&self, x: &Vector) -> Component {
        match self.rotation_part(x) {
            Some(r) if r.determinant() < 0.0 => Component::Reflection,
            _ => Component::Identity,
        }
    }
}

/// `S(SᵀS)⁻¹` for an arbitrary frame matrix.
pub fn projector_from_frame(s: &Matrix) -> Result<Matrix> {
    let gram = s.transpose() * s;
    let scale = gram.diagonal().iter().copied().fold(0.0, f64::max);
    let inv = spd_inverse(&gram).ok_or(Error::RankDeficient { what: "tangent frame" })?;
    // Cholesky succeeds on badly conditioned Gram matrices too.
    if scale * operator_norm(&inv) > 1e12 {
        return Err(Error::RankDeficient { what: "tangent frame" });
    }
    Ok(s * inv)
}

fn haar_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Matrix {
    loop {
        let g = DMatrix::<f64>::from_fn(n, n, |_, _| StandardNormal.sample(rng));
        let mut q = Matrix::zeros(n, n);
        let mut ok = true;
        for j in 0..n {
            let mut v = g.column(j).into_owned();
            for k in 0..j {
                let qk = q.column(k);
                let proj = qk.dot(&v);
                v -= qk * proj;
            }
            let norm = v.norm();
            if norm < 1e-10 {
                ok = false;
                break;
            }
            q.set_column(j, &(v / norm));
        }
        if ok {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::skew_basis;
    use alloc::vec;

    fn o2xr_point(r: [f64; 4], x: f64) -> Vector {
        Vector::from_vec(vec![r[0], r[1], r[2], r[3], x])
    }

    #[test]
    fn o2xr_residual_examples() {
        let m = EmbeddedManifold::new(Group::O2xR);
        let h = m.constraint_residual(&o2xr_point([1.0, 0.0, 0.0, 1.0], 7.0)).unwrap();
        assert_eq!(h.as_slice(), &[0.0, 0.0, 0.0]);
        let h = m.constraint_residual(&o2xr_point([2.0, 0.0, 0.0, 2.0], 0.0)).unwrap();
        assert_eq!(h.as_slice(), &[3.0, 3.0, 0.0]);
    }

    #[test]
    fn euclidean_residual_is_empty() {
        let m = EmbeddedManifold::new(Group::Euclidean(3));
        let h = m
            .constraint_residual(&Vector::from_vec(vec![1.0, -2.0, 5.0]))
            .unwrap();
        assert_eq!(h.len(), 0);
        assert_eq!(m.frame(&Vector::zeros(3)).unwrap(), Matrix::identity(3, 3));
        assert_eq!(m.projector(&Vector::zeros(3)).unwrap(), Matrix::identity(3, 3));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let m = EmbeddedManifold::new(Group::O2xR);
        assert!(matches!(
            m.constraint_residual(&Vector::zeros(4)),
            Err(Error::DimensionMismatch { expected: 5, found: 4, .. })
        ));
    }

    #[test]
    fn catalog_dimensions() {
        let dims = |g| {
            let m = EmbeddedManifold::new(g);
            (m.n_amb(), m.n_con(), m.n_dim())
        };
        assert_eq!(dims(Group::Euclidean(4)), (4, 0, 4));
        assert_eq!(dims(Group::O2xR), (5, 3, 2));
        assert_eq!(dims(Group::SO3), (9, 6, 3));
        assert_eq!(dims(Group::SE3), (12, 6, 6));
    }

    #[test]
    fn o2xr_frame_at_identity_matches_displayed_matrix() {
        let m = EmbeddedManifold::new(Group::O2xR);
        let s = m.frame(&o2xr_point([1.0, 0.0, 0.0, 1.0], 0.0)).unwrap();
        let c = 1.0 / 2.0_f64.sqrt();
        // columns (0,0,0,0,1) and (−r2, r1, −r4, r3, 0)/√2 at r = (1,0,0,1)
        let want = Matrix::from_column_slice(
            5,
            2,
            &[0.0, 0.0, 0.0, 0.0, 1.0, 0.0, c, -c, 0.0, 0.0],
        );
        assert!((s - want).norm() < 1e-15);
    }

    #[test]
    fn frame_rejects_off_manifold_points() {
        let m = EmbeddedManifold::new(Group::O2xR);
        let err = m.frame(&o2xr_point([2.0, 0.0, 0.0, 2.0], 0.0)).unwrap_err();
        match err {
            Error::OffManifold { residual } => assert!((residual - 18.0_f64.sqrt()).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn projector_of_scaled_frame() {
        let m = EmbeddedManifold::new(Group::SE3);
        let s = m.frame(&m.random_point_seeded(3)).unwrap() * 2.0;
        let p = projector_from_frame(&s).unwrap();
        assert!((p - &s / 4.0).norm() < 1e-14);
    }

    #[test]
    fn projector_rejects_rank_deficient_frame() {
        let mut s = Matrix::zeros(4, 2);
        s[(0, 0)] = 1.0;
        s[(0, 1)] = 1.0;
        assert!(matches!(
            projector_from_frame(&s),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn retraction_examples() {
        let m = EmbeddedManifold::new(Group::SO3);
        let y = vec_row_major(&(Matrix::identity(3, 3) * 1.1));
        let x = m.retract(&y).unwrap();
        assert!((x - vec_row_major(&Matrix::identity(3, 3))).norm() < 1e-14);

        let p = m.random_point_seeded(11);
        assert!((m.retract(&p).unwrap() - &p).norm() < 1e-12);

        let skew = &skew_basis(3)[1] * 1e-3 + &skew_basis(3)[2] * 2e-3;
        let y = vec_row_major(&(Matrix::identity(3, 3) + skew));
        let r = rotation_block(&m.retract(&y).unwrap(), 3);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
        assert!((r.transpose() * &r - Matrix::identity(3, 3)).norm() < 1e-10);
    }

    #[test]
    fn retraction_rejects_singular_blocks() {
        let m = EmbeddedManifold::new(Group::SE3);
        assert!(matches!(
            m.retract(&Vector::zeros(12)),
            Err(Error::Degenerate { .. })
        ));
    }

    #[test]
    fn sampling_is_deterministic_and_on_manifold() {
        let m = EmbeddedManifold::new(Group::SE3);
        assert_eq!(m.random_point_seeded(5), m.random_point_seeded(5));
        for x in m.sample_points(50, 1) {
            assert!(m.residual_norm(&x).unwrap() <= 1e-10);
            assert!(m.rotation_part(&x).unwrap().determinant() > 0.0);
        }
    }

    #[test]
    fn o2_reflection_component_on_request() {
        let m = EmbeddedManifold::new(Group::O2xR);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = m.random_point_in(&mut rng, Component::Reflection);
        assert_eq!(m.component_of(&x), Component::Reflection);
        assert!(m.residual_norm(&x).unwrap() <= 1e-12);
        let y = m.random_point(&mut rng);
        assert_eq!(m.component_of(&y), Component::Identity);
    }

    #[test]
    fn unknown_group_name() {
        assert!(matches!(
            Group::parse("so4", None),
            Err(Error::UnknownName(_))
        ));
        assert!(Group::parse("rn", None).is_err());
        assert_eq!(Group::parse("rn", Some(2)).unwrap(), Group::Euclidean(2));
    }
}
