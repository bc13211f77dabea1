//! Control-affine systems `ẋ = f(x,t) + Σ uᵢ bᵢ(x,t)` on an embedded
//! manifold, their variational matrices and the reduced operators
//! `E`, `S_f`, `S_{b_i}` expressed in the manifold's tangent frame.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::manifold::{EmbeddedManifold, Group};

/// A (possibly time-varying) vector field on the ambient space.
pub type Field = Arc<dyn Fn(&Vector, f64) -> Vector + Send + Sync>;
/// Jacobian `∂F/∂x` of a [`Field`], `n_amb × n_amb`.
pub type FieldJacobian = Arc<dyn Fn(&Vector, f64) -> Matrix + Send + Sync>;

/// Step for central-difference Jacobians of fields without analytic ones.
pub const JACOBIAN_STEP: f64 = 1e-6;
/// Ambient step for directional derivatives of frame-dependent quantities.
pub const FRAME_DERIVATIVE_STEP: f64 = 1e-5;
pub const TRANSVERSALITY_TOL: f64 = 1e-9;
/// Largest accepted `‖S E − B‖_F`.
pub const FACTOR_TOL: f64 = 1e-8;

#[derive(Clone)]
pub struct ControlAffineSystem {
    name: String,
    manifold: EmbeddedManifold,
    drift: Field,
    drift_jacobian: Option<FieldJacobian>,
    inputs: Vec<Field>,
    input_jacobians: Vec<Option<FieldJacobian>>,
    autonomous: bool,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("name", &self.name)
            .field("manifold", &self.manifold.name())
            .field("inputs", &self.inputs.len())
            .field("autonomous", &self.autonomous)
            .finish()
    }
}

/// Which vector field of a system a diagnostic refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldId {
    Drift,
    Input(usize),
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldId::Drift => write!(f, "f"),
            FieldId::Input(i) => write!(f, "b{}", i + 1),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransversalityReport {
    /// `max ‖∂h/∂x · f‖` over the samples.
    pub drift_residual: f64,
    /// `max ‖∂h/∂x · bᵢ‖` per input.
    pub input_residuals: Vec<f64>,
    /// Field with the largest residual among those above tolerance.
    pub worst_field: Option<FieldId>,
    pub pass: bool,
}

/// Reduced operators at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedOperators {
    /// `n_dim × m`, with `B = S E`.
    pub e: Matrix,
    pub s_f: Matrix,
    pub s_b: Vec<Matrix>,
}

impl ControlAffineSystem {
    pub fn new(name: impl Into<String>, manifold: EmbeddedManifold, drift: Field) -> Self {
        Self {
            name: name.into(),
            manifold,
            drift,
            drift_jacobian: None,
            inputs: Vec::new(),
            input_jacobians: Vec::new(),
            autonomous: true,
        }
    }

    pub fn with_drift_jacobian(mut self, jacobian: FieldJacobian) -> Self {
        self.drift_jacobian = Some(jacobian);
        self
    }

    pub fn with_input(mut self, field: Field, jacobian: Option<FieldJacobian>) -> Self {
        self.inputs.push(field);
        self.input_jacobians.push(jacobian);
        self
    }

    /// Marks the system as depending on `t`.
    pub fn time_varying(mut self) -> Self {
        self.autonomous = false;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn manifold(&self) -> &EmbeddedManifold {
        &self.manifold
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_autonomous(&self) -> bool {
        self.autonomous
    }

    pub fn drift(&self, x: &Vector, t: f64) -> Vector {
        (self.drift)(x, t)
    }

    pub fn input_field(&self, i: usize, x: &Vector, t: f64) -> Vector {
        (self.inputs[i])(x, t)
    }

    /// `B(x,t) = [b₁ … b_m]`.
    pub fn input_matrix(&self, x: &Vector, t: f64) -> Matrix {
        let n = self.manifold.n_amb();
        let mut b = Matrix::zeros(n, self.inputs.len());
        for (i, field) in self.inputs.iter().enumerate() {
            b.set_column(i, &field(x, t));
        }
        b
    }

    /// `f(x,t) + B(x,t) u`.
    pub fn vector_field(&self, x: &Vector, u: &Vector, t: f64) -> Result<Vector> {
        check_len("input", self.inputs.len(), u.len())?;
        let mut v = self.drift(x, t);
        for (i, field) in self.inputs.iter().enumerate() {
            if u[i] != 0.0 {
                v += field(x, t) * u[i];
            }
        }
        Ok(v)
    }

    pub fn drift_jacobian(&self, x: &Vector, t: f64) -> Matrix {
        match &self.drift_jacobian {
            Some(jac) => jac(x, t),
            None => finite_difference_jacobian(|y| (self.drift)(y, t), x, JACOBIAN_STEP),
        }
    }

    pub fn input_jacobian(&self, i: usize, x: &Vector, t: f64) -> Matrix {
        match &self.input_jacobians[i] {
            Some(jac) => jac(x, t),
            None => finite_difference_jacobian(|y| (self.inputs[i])(y, t), x, JACOBIAN_STEP),
        }
    }

    /// `A(x,u,t) = ∂f/∂x + Σ uᵢ ∂bᵢ/∂x`.
    pub fn variational_matrix(&self, x: &Vector, u: &Vector, t: f64) -> Result<Matrix> {
        check_len("ambient point", self.manifold.n_amb(), x.len())?;
        check_len("input", self.inputs.len(), u.len())?;
        let mut a = self.drift_jacobian(x, t);
        for i in 0..self.inputs.len() {
            if u[i] != 0.0 {
                a += self.input_jacobian(i, x, t) * u[i];
            }
        }
        Ok(a)
    }

    /// `E = (SᵀS)⁻¹SᵀB`, rejected when `‖SE − B‖_F > FACTOR_TOL`.
    pub fn factor_e(&self, x: &Vector, t: f64) -> Result<Matrix> {
        let s = self.manifold.frame(x)?;
        let p = crate::manifold::projector_from_frame(&s)?;
        let b = self.input_matrix(x, t);
        let e = p.transpose() * &b;
        let residual = (&s * &e - &b).norm();
        if residual > FACTOR_TOL {
            let worst = (0..b.ncols())
                .map(|i| (i, (&s * e.column(i) - b.column(i)).norm()))
                .fold((0, 0.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            return Err(Error::NotTangent {
                field: FieldId::Input(worst.0).to_string(),
                residual,
            });
        }
        Ok(e)
    }

    /// `D_v(P_Sᵀ)` by central differences along the unit direction of `v`,
    /// with both perturbed points retracted onto the manifold.
    fn projector_derivative(&self, x: &Vector, v: &Vector) -> Result<Matrix> {
        let norm = v.norm();
        let m = &self.manifold;
        if norm == 0.0 || matches!(m.group(), Group::Euclidean(_)) {
            return Ok(Matrix::zeros(m.n_dim(), m.n_amb()));
        }
        let h = FRAME_DERIVATIVE_STEP;
        let dir = v / norm;
        let plus = m.projector(&m.retract(&(x + &dir * h))?)?;
        let minus = m.projector(&m.retract(&(x - &dir * h))?)?;
        Ok((plus - minus).transpose() * (norm / (2.0 * h)))
    }

    fn reduced_operator(&self, x: &Vector, field: &Vector, jacobian: &Matrix) -> Result<Matrix> {
        let s = self.manifold.frame(x)?;
        let p = crate::manifold::projector_from_frame(&s)?;
        let d_p = self.projector_derivative(x, field)?;
        Ok(d_p * &s + p.transpose() * jacobian * &s)
    }

    /// `S_f = D_f(P_Sᵀ) S + P_Sᵀ ∂f/∂x S`.
    pub fn reduced_drift(&self, x: &Vector, t: f64) -> Result<Matrix> {
        self.reduced_operator(x, &self.drift(x, t), &self.drift_jacobian(x, t))
    }

    /// `S_{b_i} = D_{b_i}(P_Sᵀ) S + P_Sᵀ ∂b_i/∂x S` (zero-based `i`).
    pub fn reduced_input(&self, i: usize, x: &Vector, t: f64) -> Result<Matrix> {
        if i >= self.inputs.len() {
            return Err(Error::InvalidParameter {
                name: "input index",
                reason: format!("{i} out of range for {} inputs", self.inputs.len()),
            });
        }
        self.reduced_operator(x, &self.input_field(i, x, t), &self.input_jacobian(i, x, t))
    }

    pub fn reduced_operators(&self, x: &Vector, t: f64) -> Result<ReducedOperators> {
        Ok(ReducedOperators {
            e: self.factor_e(x, t)?,
            s_f: self.reduced_drift(x, t)?,
            s_b: (0..self.inputs.len())
                .map(|i| self.reduced_input(i, x, t))
                .collect::<Result<_>>()?,
        })
    }

    /// Checks `L_f h = 0` and `L_{b_i} h = 0` on the samples.
    pub fn transversality_check(&self, samples: &[Vector], t: f64) -> Result<TransversalityReport> {
        let n = self.manifold.n_amb();
        let mut drift_residual: f64 = 0.0;
        let mut input_residuals = alloc::vec![0.0_f64; self.inputs.len()];
        for x in samples {
            let jac = self.manifold.constraint_jacobian(x)?;
            let f = self.drift(x, t);
            check_len("drift value", n, f.len())?;
            drift_residual = drift_residual.max((&jac * f).norm());
            for (i, r) in input_residuals.iter_mut().enumerate() {
                let b = self.input_field(i, x, t);
                check_len("input field value", n, b.len())?;
                *r = r.max((&jac * b).norm());
            }
        }
        let mut worst: Option<(FieldId, f64)> = None;
        let candidates = core::iter::once((FieldId::Drift, drift_residual)).chain(
            input_residuals
                .iter()
                .enumerate()
                .map(|(i, &r)| (FieldId::Input(i), r)),
        );
        for (id, r) in candidates {
            if r > TRANSVERSALITY_TOL && worst.is_none_or(|w| r > w.1) {
                worst = Some((id, r));
            }
        }
        Ok(TransversalityReport {
            drift_residual,
            input_residuals,
            worst_field: worst.map(|w| w.0),
            pass: worst.is_none(),
        })
    }
}

/// Central-difference Jacobian of `g` at `x`.
pub fn finite_difference_jacobian<F>(g: F, x: &Vector, step: f64) -> Matrix
where
    F: Fn(&Vector) -> Vector,
{
    let n = x.len();
    let rows = g(x).len();
    let mut jac = Matrix::zeros(rows, n);
    let mut xp = x.clone();
    for j in 0..n {
        let orig = xp[j];
        xp[j] = orig + step;
        let plus = g(&xp);
        xp[j] = orig - step;
        let minus = g(&xp);
        xp[j] = orig;
        jac.set_column(j, &((plus - minus) / (2.0 * step)));
    }
    jac
}

/// Parameters accepted by the built-in systems.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SystemParams {
    pub k: Option<f64>,
    pub e: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum BuiltinSystem {
    /// `ẋ = −x + u` on ℝ.
    ScalarLinear,
    /// Angle directly controlled, `ẋ = −x + R₁₁` on O(2)×ℝ.
    O2xRToy,
    /// `Ṙ = RΩ`, `Ω = Σ uᵢÊᵢ`, `v̇ = −kv + Re` on SE(3).
    Se3Heading { k: f64, e: [f64; 3] },
}

impl BuiltinSystem {
    pub fn from_name(name: &str, params: &SystemParams) -> Result<Self> {
        match name {
            "scalar-linear" => Ok(BuiltinSystem::ScalarLinear),
            "o2xr-toy" => Ok(BuiltinSystem::O2xRToy),
            "se3-heading" => {
                let k = params.k.unwrap_or(1.0);
                let e = params.e.unwrap_or([0.0, 0.0, 1.0]);
                if !(k > 0.0) || !k.is_finite() {
                    return Err(Error::InvalidParameter {
                        name: "k",
                        reason: format!("must be positive, got {k}"),
                    });
                }
                let norm = e.iter().map(|c| c * c).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidParameter {
                        name: "e",
                        reason: format!("must be a unit vector, |e| = {norm}"),
                    });
                }
                Ok(BuiltinSystem::Se3Heading { k, e })
            }
            other => Err(Error::UnknownName(other.into())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            BuiltinSystem::ScalarLinear => "scalar-linear",
            BuiltinSystem::O2xRToy => "o2xr-toy",
            BuiltinSystem::Se3Heading { .. } => "se3-heading",
        }
    }

    pub fn params(&self) -> SystemParams {
        match self {
            BuiltinSystem::Se3Heading { k, e } => SystemParams {
                k: Some(*k),
                e: Some(*e),
            },
            _ => SystemParams::default(),
        }
    }

    pub fn build(&self) -> ControlAffineSystem {
        match self {
            BuiltinSystem::ScalarLinear => scalar_linear(),
            BuiltinSystem::O2xRToy => o2xr_toy(),
            BuiltinSystem::Se3Heading { k, e } => se3_heading(*k, *e),
        }
    }
}

pub fn builtin_system(name: &str, params: &SystemParams) -> Result<ControlAffineSystem> {
    BuiltinSystem::from_name(name, params).map(|b| b.build())
}

fn scalar_linear() -> ControlAffineSystem {
    let m = EmbeddedManifold::new(Group::Euclidean(1));
    ControlAffineSystem::new("scalar-linear", m, Arc::new(|x: &Vector, _| -x))
        .with_drift_jacobian(Arc::new(|_: &Vector, _| Matrix::from_element(1, 1, -1.0)))
        .with_input(
            Arc::new(|_: &Vector, _| Vector::from_element(1, 1.0)),
            Some(Arc::new(|_: &Vector, _| Matrix::zeros(1, 1))),
        )
}

/// Field `x ↦ (vec(R·gen), 0)` and its (constant) Jacobian.
fn left_invariant_field(m: &EmbeddedManifold, gen: Matrix) -> (Field, FieldJacobian) {
    let mu = m.group().rotation_order();
    let n = m.n_amb();
    let mut jac = Matrix::zeros(n, n);
    // (R·G)_{ab} = Σ_c R_ac G_cb
    for a in 0..mu {
        for b in 0..mu {
            for c in 0..mu {
                jac[(a * mu + b, a * mu + c)] = gen[(c, b)];
            }
        }
    }
    let field_jac = jac.clone();
    let field: Field = Arc::new(move |x: &Vector, _| &field_jac * x);
    (field, Arc::new(move |_: &Vector, _| jac.clone()))
}

fn o2xr_toy() -> ControlAffineSystem {
    let m = EmbeddedManifold::new(Group::O2xR);
    let (b, b_jac) = left_invariant_field(&m, m.generators()[0].clone());
    ControlAffineSystem::new(
        "o2xr-toy",
        m,
        Arc::new(|x: &Vector, _| {
            let mut f = Vector::zeros(5);
            f[4] = -x[4] + x[0];
            f
        }),
    )
    .with_drift_jacobian(Arc::new(|_: &Vector, _| {
        let mut j = Matrix::zeros(5, 5);
        j[(4, 0)] = 1.0;
        j[(4, 4)] = -1.0;
        j
    }))
    .with_input(b, Some(b_jac))
}

fn se3_heading(k: f64, e: [f64; 3]) -> ControlAffineSystem {
    let m = EmbeddedManifold::new(Group::SE3);
    let gens: Vec<Matrix> = m.generators().to_vec();
    let mut drift_jac = Matrix::zeros(12, 12);
    for i in 0..3 {
        for j in 0..3 {
            drift_jac[(9 + i, 3 * i + j)] = e[j];
        }
        drift_jac[(9 + i, 9 + i)] = -k;
    }
    let mut sys = ControlAffineSystem::new(
        "se3-heading",
        m.clone(),
        Arc::new(move |x: &Vector, _| {
            let mut f = Vector::zeros(12);
            for i in 0..3 {
                let re: f64 = (0..3).map(|j| x[3 * i + j] * e[j]).sum();
                f[9 + i] = -k * x[9 + i] + re;
            }
            f
        }),
    )
    .with_drift_jacobian(Arc::new(move |_: &Vector, _| drift_jac.clone()));
    for gen in gens {
        let (b, b_jac) = left_invariant_field(&m, gen);
        sys = sys.with_input(b, Some(b_jac));
    }
    sys
}
