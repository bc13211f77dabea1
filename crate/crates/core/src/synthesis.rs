//! Search for the reduced dual metric `W(x)` and multiplier `ρ(x)` of a
//! control contraction metric, certificate verification on fresh samples,
//! and recovery of the ambient metric `M = P_S W⁻¹ P_Sᵀ`.
//!
//! For a rate `λ` and bounds `a₁, a₂` the sampled conditions at a point are
//!
//! ```text
//! R0_lo = I/a₂ − W                                  ⪯ 0
//! R0_hi = W − I/a₁                                  ⪯ 0
//! R1    = −∂W/∂t − D_f W + W S_fᵀ + S_f W + 2λW − ρEEᵀ ≺ 0
//! R2[i] = −D_{b_i} W + W S_{b_i}ᵀ + S_{b_i} W        = 0
//! ```
//!
//! All four are affine in the coefficients of `W` for fixed `ρ`, which is what
//! makes the search convex. `W` is a polynomial of degree ≤ 2 in the ambient
//! coordinates with symmetric matrix coefficients; `ρ` is the square of a
//! polynomial so it is non-negative by construction.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::linalg::{
    max_eigenvalue, null_space_basis, null_space_projector, positive_part, spd_inverse, symmetric_basis, Matrix,
    Vector,
};
use crate::manifold::EmbeddedManifold;
use crate::systems::{ControlAffineSystem, ReducedOperators, SystemParams};

pub const DEFAULT_A1: f64 = 0.1;
pub const DEFAULT_A2: f64 = 10.0;
pub const DEFAULT_MARGIN: f64 = 1e-6;
pub const DEFAULT_KILL_TOL: f64 = 1e-8;
/// Rounding allowance on the non-strict bound conditions.
pub const BOUND_TOL: f64 = 1e-12;
/// Relative eigenvalue cut-off used to extract the Killing subspace.
const KILLING_NULL_TOL: f64 = 1e-12;
/// Directions whose per-point Killing residual stays below this fraction of
/// `kill_tol` (per unit coefficient) also count as Killing; this absorbs the
/// finite-difference noise in `S_{b_i}`.
const KILLING_NOISE_FRACTION: f64 = 1e-2;

fn killing_abs_tol(kill_tol: f64, n_points: usize, n_inputs: usize) -> f64 {
    let per_point = KILLING_NOISE_FRACTION * kill_tol;
    (n_points * n_inputs) as f64 * per_point * per_point
}

/// Product of ambient coordinates, stored as the sorted multiset of variable
/// indices (`[]` is the constant monomial, `[0, 0]` is `x₀²`).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct Monomial(Vec<usize>);

impl Monomial {
    pub fn new(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        Monomial(indices)
    }

    pub fn constant() -> Self {
        Monomial(Vec::new())
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn eval(&self, x: &Vector) -> f64 {
        self.0.iter().map(|&i| x[i]).product()
    }

    /// `∇φ(x) · v`.
    pub fn directional(&self, x: &Vector, v: &Vector) -> f64 {
        (0..self.0.len())
            .map(|p| {
                let rest: f64 = self
                    .0
                    .iter()
                    .enumerate()
                    .filter(|&(q, _)| q != p)
                    .map(|(_, &i)| x[i])
                    .product();
                v[self.0[p]] * rest
            })
            .sum()
    }
}

/// All monomials of total degree ≤ `degree` in `n_vars` variables, graded
/// lexicographic order (constant first).
pub fn monomial_basis(n_vars: usize, degree: usize) -> Vec<Monomial> {
    let mut out = vec![Monomial::constant()];
    let mut layer = vec![Monomial::constant()];
    for _ in 0..degree {
        let mut next = Vec::new();
        for m in &layer {
            let start = m.0.last().copied().unwrap_or(0);
            for i in start..n_vars {
                let mut idx = m.0.clone();
                idx.push(i);
                next.push(Monomial(idx));
            }
        }
        out.extend(next.iter().cloned());
        layer = next;
    }
    out
}

/// `W(x) = Σ_k φ_k(x) W_k`, `ρ(x) = (Σ_k φ_k(x) r_k)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricParameterization {
    pub degree: usize,
    pub basis: Vec<Monomial>,
    pub coeffs: Vec<Matrix>,
    pub rho_coeffs: Vec<f64>,
}

impl MetricParameterization {
    /// Degree-0 parameterization: constant `W` and constant `ρ ≥ 0`.
    pub fn constant(w: Matrix, rho: f64) -> Self {
        Self {
            degree: 0,
            basis: vec![Monomial::constant()],
            coeffs: vec![w],
            rho_coeffs: vec![rho.max(0.0).sqrt()],
        }
    }

    pub fn n_dim(&self) -> usize {
        self.coeffs.first().map_or(0, |c| c.nrows())
    }

    pub fn validate(&self, n_amb: usize, n_dim: usize) -> Result<()> {
        check_len("coefficient count", self.basis.len(), self.coeffs.len())?;
        check_len("rho coefficient count", self.basis.len(), self.rho_coeffs.len())?;
        for c in &self.coeffs {
            check_len("coefficient rows", n_dim, c.nrows())?;
            check_len("coefficient columns", n_dim, c.ncols())?;
            if (c - c.transpose()).norm() > 1e-12 * (1.0 + c.norm()) {
                return Err(Error::InvalidInput("metric coefficient is not symmetric".into()));
            }
        }
        for m in &self.basis {
            if m.degree() > self.degree || m.0.iter().any(|&i| i >= n_amb) {
                return Err(Error::InvalidInput(format!(
                    "monomial {:?} does not fit degree {} in {} variables",
                    m.0, self.degree, n_amb
                )));
            }
        }
        Ok(())
    }

    pub fn w_at(&self, x: &Vector) -> Matrix {
        let n = self.n_dim();
        self.basis
            .iter()
            .zip(&self.coeffs)
            .fold(Matrix::zeros(n, n), |acc, (m, c)| acc + c * m.eval(x))
    }

    /// `D_v W(x)`.
    pub fn w_derivative(&self, x: &Vector, v: &Vector) -> Matrix {
        let n = self.n_dim();
        self.basis
            .iter()
            .zip(&self.coeffs)
            .fold(Matrix::zeros(n, n), |acc, (m, c)| {
                if m.degree() == 0 {
                    acc
                } else {
                    acc + c * m.directional(x, v)
                }
            })
    }

    pub fn rho_at(&self, x: &Vector) -> f64 {
        let l: f64 = self
            .basis
            .iter()
            .zip(&self.rho_coeffs)
            .map(|(m, r)| m.eval(x) * r)
            .sum();
        l * l
    }
}

/// Rate, bounds and tolerances a certificate is checked against.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LmiSpec {
    pub lambda: f64,
    pub a1: f64,
    pub a2: f64,
    /// Required `λ_max(R1) ≤ −margin`.
    pub margin: f64,
    /// Required `‖R2[i]‖_F ≤ kill_tol`.
    pub kill_tol: f64,
}

impl LmiSpec {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            a1: DEFAULT_A1,
            a2: DEFAULT_A2,
            margin: DEFAULT_MARGIN,
            kill_tol: DEFAULT_KILL_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: &str| {
            Err(Error::InvalidParameter {
                name,
                reason: reason.into(),
            })
        };
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return bad("lambda", "must be positive and finite");
        }
        if !(self.a1 > 0.0) || !(self.a2 >= self.a1) || !self.a2.is_finite() {
            return bad("a1/a2", "need 0 < a1 <= a2 < inf");
        }
        if !(self.margin >= 0.0) || !(self.kill_tol >= 0.0) {
            return bad("tolerances", "must be non-negative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LmiResiduals {
    pub r0_lo: Matrix,
    pub r0_hi: Matrix,
    pub r1: Matrix,
    pub r2: Vec<Matrix>,
}

/// One of the sampled conditions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Condition {
    LowerBound,
    UpperBound,
    Contraction,
    /// Zero-based input index.
    Killing(usize),
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Condition::LowerBound => write!(f, "R0_lo"),
            Condition::UpperBound => write!(f, "R0_hi"),
            Condition::Contraction => write!(f, "R1"),
            Condition::Killing(i) => write!(f, "R2[{}]", i + 1),
        }
    }
}

impl Condition {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "R0_lo" => Some(Condition::LowerBound),
            "R0_hi" => Some(Condition::UpperBound),
            "R1" => Some(Condition::Contraction),
            _ => {
                let idx = s.strip_prefix("R2[")?.strip_suffix(']')?;
                let i: usize = idx.parse().ok()?;
                (i >= 1).then(|| Condition::Killing(i - 1))
            }
        }
    }
}

/// Worst margins of the sampled conditions over a point set.
#[derive(Clone, Debug, PartialEq)]
pub struct VerificationReport {
    pub samples: usize,
    pub seed: u64,
    /// `max λ_max(R1)`; must be `≤ −margin`.
    pub worst_r1: f64,
    pub worst_r0_lo: f64,
    pub worst_r0_hi: f64,
    /// `max_i ‖R2[i]‖_F`.
    pub worst_killing: f64,
    pub failed: Vec<Condition>,
    pub pass: bool,
}

impl VerificationReport {
    fn empty(seed: u64) -> Self {
        Self {
            samples: 0,
            seed,
            worst_r1: f64::NEG_INFINITY,
            worst_r0_lo: f64::NEG_INFINITY,
            worst_r0_hi: f64::NEG_INFINITY,
            worst_killing: 0.0,
            failed: Vec::new(),
            pass: false,
        }
    }
}

/// Running worst values plus the point where the worst violation occurred.
#[derive(Clone, Debug)]
struct Tally {
    report: VerificationReport,
    killing_index: Vec<f64>,
    worst_violation: f64,
    worst_point: Option<usize>,
    worst_condition: Option<Condition>,
}

impl Tally {
    fn new(seed: u64, m: usize) -> Self {
        Self {
            report: VerificationReport::empty(seed),
            killing_index: vec![0.0; m],
            worst_violation: f64::NEG_INFINITY,
            worst_point: None,
            worst_condition: None,
        }
    }

    fn add(&mut self, idx: usize, r1: f64, r0_lo: f64, r0_hi: f64, kill: &[f64], spec: &LmiSpec) {
        let rep = &mut self.report;
        rep.samples += 1;
        rep.worst_r1 = rep.worst_r1.max(r1);
        rep.worst_r0_lo = rep.worst_r0_lo.max(r0_lo);
        rep.worst_r0_hi = rep.worst_r0_hi.max(r0_hi);
        for (i, &k) in kill.iter().enumerate() {
            self.killing_index[i] = self.killing_index[i].max(k);
            rep.worst_killing = rep.worst_killing.max(k);
        }
        let mut candidates = vec![
            (Condition::Contraction, r1 + spec.margin),
            (Condition::LowerBound, r0_lo - BOUND_TOL),
            (Condition::UpperBound, r0_hi - BOUND_TOL),
        ];
        candidates.extend(
            kill.iter()
                .enumerate()
                .map(|(i, &k)| (Condition::Killing(i), k - spec.kill_tol)),
        );
        for (cond, v) in candidates {
            if v > self.worst_violation {
                self.worst_violation = v;
                self.worst_point = Some(idx);
                self.worst_condition = Some(cond);
            }
        }
    }

    fn finish(mut self, spec: &LmiSpec) -> Self {
        let rep = &mut self.report;
        rep.failed.clear();
        if rep.worst_r0_lo > BOUND_TOL {
            rep.failed.push(Condition::LowerBound);
        }
        if rep.worst_r0_hi > BOUND_TOL {
            rep.failed.push(Condition::UpperBound);
        }
        if rep.worst_r1 > -spec.margin {
            rep.failed.push(Condition::Contraction);
        }
        for (i, &k) in self.killing_index.iter().enumerate() {
            if k > spec.kill_tol {
                rep.failed.push(Condition::Killing(i));
            }
        }
        rep.pass = rep.samples > 0 && rep.failed.is_empty();
        self
    }
}

fn residuals_from_ops(
    param: &MetricParameterization,
    sys: &ControlAffineSystem,
    spec: &LmiSpec,
    ops: &ReducedOperators,
    x: &Vector,
    t: f64,
) -> LmiResiduals {
    let n = param.n_dim();
    let eye = Matrix::identity(n, n);
    let w = param.w_at(x);
    let rho = param.rho_at(x);
    let df_w = param.w_derivative(x, &sys.drift(x, t));
    let r1 = -df_w + &w * ops.s_f.transpose() + &ops.s_f * &w + &w * (2.0 * spec.lambda)
        - &ops.e * ops.e.transpose() * rho;
    let r2 = ops
        .s_b
        .iter()
        .enumerate()
        .map(|(i, s_b)| {
            -param.w_derivative(x, &sys.input_field(i, x, t)) + &w * s_b.transpose() + s_b * &w
        })
        .collect();
    LmiResiduals {
        r0_lo: &eye / spec.a2 - &w,
        r0_hi: &w - &eye / spec.a1,
        r1,
        r2,
    }
}

/// Residual matrices of the sampled conditions at `x` (`∂W/∂t = 0`).
pub fn lmi_residuals(
    param: &MetricParameterization,
    sys: &ControlAffineSystem,
    spec: &LmiSpec,
    x: &Vector,
    t: f64,
) -> Result<LmiResiduals> {
    let m = sys.manifold();
    param.validate(m.n_amb(), m.n_dim())?;
    let ops = sys.reduced_operators(x, t)?;
    Ok(residuals_from_ops(param, sys, spec, &ops, x, t))
}

fn evaluate_points(
    param: &MetricParameterization,
    sys: &ControlAffineSystem,
    spec: &LmiSpec,
    points: &[Vector],
    seed: u64,
) -> Result<Tally> {
    let mut tally = Tally::new(seed, sys.input_dim());
    for (idx, x) in points.iter().enumerate() {
        let ops = sys.reduced_operators(x, 0.0)?;
        let r = residuals_from_ops(param, sys, spec, &ops, x, 0.0);
        let kill: Vec<f64> = r.r2.iter().map(|m| m.norm()).collect();
        tally.add(
            idx,
            max_eigenvalue(&r.r1),
            max_eigenvalue(&r.r0_lo),
            max_eigenvalue(&r.r0_hi),
            &kill,
            spec,
        );
    }
    Ok(tally.finish(spec))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertificateStatus {
    /// Passed the grid and the dense fresh-sample check.
    Verified,
    /// Built by hand or loaded without a passing report.
    Unverified,
    /// Best iterate of a search that did not succeed.
    Infeasible,
}

impl CertificateStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CertificateStatus::Verified => "verified",
            CertificateStatus::Unverified => "unverified",
            CertificateStatus::Infeasible => "infeasible",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "verified" => Some(Self::Verified),
            "unverified" => Some(Self::Unverified),
            "infeasible" => Some(Self::Infeasible),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContractionCertificate {
    pub system: String,
    pub system_params: SystemParams,
    pub spec: LmiSpec,
    pub param: MetricParameterization,
    pub grid_size: usize,
    pub grid_seed: u64,
    pub status: CertificateStatus,
    pub report: VerificationReport,
}

impl ContractionCertificate {
    /// Hand-built certificate; `report` is empty until [`verify`] is run.
    pub fn new(
        system: impl Into<String>,
        system_params: SystemParams,
        spec: LmiSpec,
        param: MetricParameterization,
    ) -> Self {
        Self {
            system: system.into(),
            system_params,
            spec,
            param,
            grid_size: 0,
            grid_seed: 0,
            status: CertificateStatus::Unverified,
            report: VerificationReport::empty(0),
        }
    }

    pub fn lambda(&self) -> f64 {
        self.spec.lambda
    }

    /// Ambient metric `M = P_S W⁻¹ P_Sᵀ` at `x`.
    pub fn metric_at(&self, manifold: &EmbeddedManifold, x: &Vector, _t: f64) -> Result<Matrix> {
        let p = manifold.projector(x)?;
        let w_inv = self.reduced_metric(x)?;
        Ok(&p * w_inv * p.transpose())
    }

    /// `𝔐 = W⁻¹` at `x`.
    pub fn reduced_metric(&self, x: &Vector) -> Result<Matrix> {
        let w = self.param.w_at(x);
        let w_inv = spd_inverse(&w).ok_or(Error::Degenerate {
            what: "certificate metric W",
        })?;
        if !w_inv.iter().all(|v| v.is_finite()) {
            return Err(Error::Degenerate {
                what: "certificate metric W",
            });
        }
        Ok(w_inv)
    }
}

/// Re-checks a certificate on `n_samples` fresh points drawn with `seed`.
pub fn verify(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    n_samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let m = sys.manifold();
    cert.param.validate(m.n_amb(), m.n_dim())?;
    let points = m.sample_points(n_samples, seed);
    Ok(evaluate_points(&cert.param, sys, &cert.spec, &points, seed)?.report)
}

/// How the multiplier `ρ` is treated during synthesis.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RhoMode {
    #[default]
    Free,
    /// `ρ ≡ 0`: the drift alone must contract.
    Zero,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisOptions {
    pub degree: usize,
    pub grid_size: usize,
    pub seed: u64,
    pub a1: f64,
    pub a2: f64,
    pub margin: f64,
    pub kill_tol: f64,
    pub max_iters: usize,
    pub rho: RhoMode,
    /// Interior margin the penalty aims for; larger than `margin` so the
    /// descent terminates strictly inside the feasible set.
    pub target_margin: f64,
    /// Restrict `W` to the sampled Killing subspace at every step.
    pub killing_projection: bool,
    /// Dense verification uses `dense_factor × grid_size` fresh samples.
    pub dense_factor: usize,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            degree: 0,
            grid_size: 200,
            seed: 0,
            a1: DEFAULT_A1,
            a2: DEFAULT_A2,
            margin: DEFAULT_MARGIN,
            kill_tol: DEFAULT_KILL_TOL,
            max_iters: 2000,
            rho: RhoMode::Free,
            target_margin: 1e-3,
            killing_projection: true,
            dense_factor: 10,
        }
    }
}

impl SynthesisOptions {
    pub fn spec(&self, lambda: f64) -> LmiSpec {
        LmiSpec {
            lambda,
            a1: self.a1,
            a2: self.a2,
            margin: self.margin,
            kill_tol: self.kill_tol,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InfeasibleReason {
    /// `max_iters` reached with grid violations left.
    NotConverged,
    /// The penalty stopped decreasing with violations left.
    Stalled,
    /// The grid passed but the dense fresh sample did not.
    DenseVerificationFailed,
}

impl fmt::Display for InfeasibleReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InfeasibleReason::NotConverged => "not-converged",
            InfeasibleReason::Stalled => "stalled",
            InfeasibleReason::DenseVerificationFailed => "dense-verification-failed",
        })
    }
}

/// Outcome of a search that found no certificate. Not a proof of
/// infeasibility.
#[derive(Clone, Debug, PartialEq)]
pub struct InfeasibleReport {
    pub reason: InfeasibleReason,
    pub iterations: usize,
    pub objective: f64,
    pub grid_report: VerificationReport,
    pub dense_report: Option<VerificationReport>,
    pub worst_point: Option<Vector>,
    pub worst_condition: Option<Condition>,
    /// Best iterate, with status [`CertificateStatus::Infeasible`].
    pub best: ContractionCertificate,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Synthesis {
    Certified {
        certificate: ContractionCertificate,
        iterations: usize,
        grid_report: VerificationReport,
    },
    Infeasible(InfeasibleReport),
}

impl Synthesis {
    pub fn certificate(&self) -> Option<&ContractionCertificate> {
        match self {
            Synthesis::Certified { certificate, .. } => Some(certificate),
            Synthesis::Infeasible(_) => None,
        }
    }
}

struct GridPoint {
    phi: Vec<f64>,
    dphi_f: Vec<f64>,
    dphi_b: Vec<Vec<f64>>,
    ops: ReducedOperators,
    eet: Matrix,
}

/// Sampled problem with decision vector
/// `θ = [W_k in the orthonormal symmetric basis, k = 0..K] ++ [r_k]`.
struct Problem {
    spec: LmiSpec,
    basis: Vec<Monomial>,
    sym: Vec<Matrix>,
    n_dim: usize,
    points: Vec<GridPoint>,
    rho_free: bool,
    delta_r1: f64,
    delta_bounds: f64,
    killing: Option<Matrix>,
}

struct Evaluation {
    objective: f64,
    gradient: Vector,
    tally: Tally,
}

impl Problem {
    fn n_w(&self) -> usize {
        self.basis.len() * self.sym.len()
    }

    fn n_theta(&self) -> usize {
        self.n_w() + if self.rho_free { self.basis.len() } else { 0 }
    }

    fn w_coeff(&self, theta: &Vector, k: usize) -> Matrix {
        let ns = self.sym.len();
        self.sym
            .iter()
            .enumerate()
            .fold(Matrix::zeros(self.n_dim, self.n_dim), |acc, (s, b)| {
                acc + b * theta[k * ns + s]
            })
    }

    fn unpack(&self, theta: &Vector) -> MetricParameterization {
        let coeffs = (0..self.basis.len()).map(|k| self.w_coeff(theta, k)).collect();
        let rho_coeffs = if self.rho_free {
            (0..self.basis.len()).map(|k| theta[self.n_w() + k]).collect()
        } else {
            vec![0.0; self.basis.len()]
        };
        MetricParameterization {
            degree: self.basis.iter().map(Monomial::degree).max().unwrap_or(0),
            basis: self.basis.clone(),
            coeffs,
            rho_coeffs,
        }
    }

    fn project(&self, theta: &mut Vector) {
        if let Some(p) = &self.killing {
            let n_w = self.n_w();
            let projected = p * theta.rows(0, n_w);
            theta.rows_mut(0, n_w).copy_from(&projected);
        }
    }

    fn evaluate(&self, theta: &Vector) -> Evaluation {
        let n = self.n_dim;
        let kb = self.basis.len();
        let spec = &self.spec;
        let eye = Matrix::identity(n, n);
        let coeffs: Vec<Matrix> = (0..kb).map(|k| self.w_coeff(theta, k)).collect();
        let mut grad_w = vec![Matrix::zeros(n, n); kb];
        let mut grad_r = vec![0.0; kb];
        let mut objective = 0.0;
        let m_inputs = self.points.first().map_or(0, |p| p.ops.s_b.len());
        let mut tally = Tally::new(0, m_inputs);
        let scale = 1.0 / self.points.len().max(1) as f64;

        for (idx, p) in self.points.iter().enumerate() {
            let combine = |weights: &[f64]| {
                weights
                    .iter()
                    .zip(&coeffs)
                    .fold(Matrix::zeros(n, n), |acc, (w, c)| acc + c * *w)
            };
            let w = combine(&p.phi);
            let df_w = combine(&p.dphi_f);
            let lin: f64 = if self.rho_free {
                (0..kb).map(|k| p.phi[k] * theta[self.n_w() + k]).sum()
            } else {
                0.0
            };
            let rho = lin * lin;

            let r1 = -&df_w
                + &w * p.ops.s_f.transpose()
                + &p.ops.s_f * &w
                + &w * (2.0 * spec.lambda)
                - &p.eet * rho;
            let r0_lo = &eye / spec.a2 - &w;
            let r0_hi = &w - &eye / spec.a1;
            let r2: Vec<Matrix> = p
                .ops
                .s_b
                .iter()
                .zip(&p.dphi_b)
                .map(|(s_b, dphi)| -combine(dphi) + &w * s_b.transpose() + s_b * &w)
                .collect();

            let (g1, pen1) = positive_part(&r1, self.delta_r1);
            let (g_lo, pen_lo) = positive_part(&r0_lo, self.delta_bounds);
            let (g_hi, pen_hi) = positive_part(&r0_hi, self.delta_bounds);
            let kill: Vec<f64> = r2.iter().map(|m| m.norm()).collect();
            objective += scale
                * (pen1 + pen_lo + pen_hi + kill.iter().map(|k| k * k).sum::<f64>());
            tally.add(
                idx,
                max_eigenvalue(&r1),
                max_eigenvalue(&r0_lo),
                max_eigenvalue(&r0_hi),
                &kill,
                spec,
            );

            // dJ/dR = 2·(R + δI)₊ for the spectral terms, 2·R for Killing.
            let g1 = g1 * (2.0 * scale);
            let g_lo = g_lo * (2.0 * scale);
            let g_hi = g_hi * (2.0 * scale);
            let r1_adj = &g1 * &p.ops.s_f + p.ops.s_f.transpose() * &g1 + &g1 * (2.0 * spec.lambda);
            let mut kill_adj = Matrix::zeros(n, n);
            for (s_b, r) in p.ops.s_b.iter().zip(&r2) {
                let g2 = r * (2.0 * scale);
                kill_adj += &g2 * s_b + s_b.transpose() * &g2;
            }
            for k in 0..kb {
                let mut g = (&r1_adj - &g_lo + &g_hi + &kill_adj) * p.phi[k] - &g1 * p.dphi_f[k];
                for (dphi, r) in p.dphi_b.iter().zip(&r2) {
                    if dphi[k] != 0.0 {
                        g -= r * (2.0 * scale * dphi[k]);
                    }
                }
                grad_w[k] += g;
            }
            if self.rho_free {
                let d_rho = -(g1.component_mul(&p.eet).sum());
                for k in 0..kb {
                    grad_r[k] += d_rho * 2.0 * lin * p.phi[k];
                }
            }
        }

        let ns = self.sym.len();
        let mut gradient = Vector::zeros(self.n_theta());
        for k in 0..kb {
            for (s, b) in self.sym.iter().enumerate() {
                gradient[k * ns + s] = grad_w[k].component_mul(b).sum();
            }
        }
        if self.rho_free {
            for k in 0..kb {
                gradient[self.n_w() + k] = grad_r[k];
            }
        }
        self.project(&mut gradient);
        Evaluation {
            objective,
            gradient,
            tally: tally.finish(spec),
        }
    }
}

/// Gram matrix of the linear map from the `W` coordinates to the stacked
/// Killing residuals over the grid.
fn killing_gram(basis_len: usize, sym: &[Matrix], points: &[GridPoint]) -> Matrix {
    let ns = sym.len();
    let n_w = basis_len * ns;
    let mut gram = Matrix::zeros(n_w, n_w);
    for p in points {
        for (s_b, dphi) in p.ops.s_b.iter().zip(&p.dphi_b) {
            let n = s_b.nrows();
            let mut a = Matrix::zeros(n * n, n_w);
            for k in 0..basis_len {
                for (s, b) in sym.iter().enumerate() {
                    let col = -b * dphi[k] + (b * s_b.transpose() + s_b * b) * p.phi[k];
                    a.set_column(k * ns + s, &Vector::from_column_slice(col.as_slice()));
                }
            }
            gram += a.transpose() * &a;
        }
    }
    gram
}

fn build_grid(
    sys: &ControlAffineSystem,
    basis: &[Monomial],
    points: &[Vector],
) -> Result<Vec<GridPoint>> {
    points
        .iter()
        .map(|x| {
            let ops = sys.reduced_operators(x, 0.0)?;
            let f = sys.drift(x, 0.0);
            let bs: Vec<Vector> = (0..sys.input_dim()).map(|i| sys.input_field(i, x, 0.0)).collect();
            Ok(GridPoint {
                phi: basis.iter().map(|m| m.eval(x)).collect(),
                dphi_f: basis.iter().map(|m| m.directional(x, &f)).collect(),
                dphi_b: bs
                    .iter()
                    .map(|b| basis.iter().map(|m| m.directional(x, b)).collect())
                    .collect(),
                eet: &ops.e * ops.e.transpose(),
                ops,
            })
        })
        .collect()
}

/// Orthonormal basis of the constant symmetric `W` whose Killing residuals
/// vanish at every point.
pub(crate) fn killing_subspace(
    sys: &ControlAffineSystem,
    points: &[Vector],
    kill_tol: f64,
) -> Result<Vec<Matrix>> {
    let basis = vec![Monomial::constant()];
    let grid = build_grid(sys, &basis, points)?;
    let sym = symmetric_basis(sys.manifold().n_dim());
    let abs_tol = killing_abs_tol(kill_tol, points.len(), sys.input_dim());
    let null = null_space_basis(&killing_gram(1, &sym, &grid), KILLING_NULL_TOL, abs_tol);
    Ok(null
        .column_iter()
        .map(|c| {
            sym.iter()
                .zip(c.iter())
                .fold(Matrix::zeros(sym[0].nrows(), sym[0].ncols()), |acc, (b, w)| acc + b * *w)
        })
        .collect())
}

/// Penalized spectral descent for `W`, `ρ` on a seeded grid, followed by a
/// dense fresh-sample verification. Evaluation is at `t = 0`.
pub fn synthesize(
    sys: &ControlAffineSystem,
    lambda: f64,
    opts: &SynthesisOptions,
) -> Result<Synthesis> {
    let spec = opts.spec(lambda);
    spec.validate()?;
    if opts.degree > 2 {
        return Err(Error::InvalidParameter {
            name: "degree",
            reason: format!("supported degrees are 0, 1, 2; got {}", opts.degree),
        });
    }
    if opts.grid_size == 0 {
        return Err(Error::InvalidParameter {
            name: "grid_size",
            reason: "must be positive".into(),
        });
    }
    let m = sys.manifold();
    let grid_points = m.sample_points(opts.grid_size, opts.seed);
    let transversality = sys.transversality_check(&grid_points, 0.0)?;
    if let Some(field) = transversality.worst_field {
        let residual = match field {
            crate::systems::FieldId::Drift => transversality.drift_residual,
            crate::systems::FieldId::Input(i) => transversality.input_residuals[i],
        };
        return Err(Error::NotTangent {
            field: format!("{field}"),
            residual,
        });
    }

    let basis = monomial_basis(m.n_amb(), opts.degree);
    let points = build_grid(sys, &basis, &grid_points)?;
    let sym = symmetric_basis(m.n_dim());
    let abs_tol = killing_abs_tol(spec.kill_tol, points.len(), sys.input_dim());
    let killing = opts.killing_projection.then(|| {
        null_space_projector(&killing_gram(basis.len(), &sym, &points), KILLING_NULL_TOL, abs_tol)
    });
    let bound_gap = 1.0 / spec.a1 - 1.0 / spec.a2;
    let problem = Problem {
        spec,
        basis,
        n_dim: m.n_dim(),
        sym,
        points,
        rho_free: opts.rho == RhoMode::Free,
        delta_r1: opts.target_margin.max(spec.margin),
        delta_bounds: (0.25 * bound_gap).min(opts.target_margin),
        killing,
    };

    // W = I/√(a₁a₂) (geometric middle of the bounds), ρ = 1.
    let mut theta = Vector::zeros(problem.n_theta());
    let w0 = 1.0 / (spec.a1 * spec.a2).sqrt();
    for i in 0..problem.n_dim {
        theta[i] = w0;
    }
    if problem.rho_free {
        theta[problem.n_w()] = 1.0;
    }
    problem.project(&mut theta);

    let mut eval = problem.evaluate(&theta);
    let mut step = 1.0;
    let mut iterations = 0;
    let mut flat_iters = 0;
    let mut reason = None;
    while !eval.tally.report.pass {
        if iterations >= opts.max_iters {
            reason = Some(InfeasibleReason::NotConverged);
            break;
        }
        let g2 = eval.gradient.norm_squared();
        if g2 == 0.0 || !g2.is_finite() {
            reason = Some(InfeasibleReason::Stalled);
            break;
        }
        let mut accepted = None;
        while step > 1e-18 {
            let mut trial = &theta - &eval.gradient * step;
            problem.project(&mut trial);
            let next = problem.evaluate(&trial);
            if next.objective <= eval.objective - 1e-4 * step * g2 {
                accepted = Some((trial, next));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        let Some((trial, next)) = accepted else {
            reason = Some(InfeasibleReason::Stalled);
            break;
        };
        let decrease = eval.objective - next.objective;
        if decrease <= 1e-14 * eval.objective.max(f64::MIN_POSITIVE) {
            flat_iters += 1;
        } else {
            flat_iters = 0;
        }
        theta = trial;
        eval = next;
        step = (step * 2.0).min(1e6);
        if flat_iters >= 50 {
            reason = Some(InfeasibleReason::Stalled);
            break;
        }
    }

    let param = problem.unpack(&theta);
    let grid_tally = eval.tally;
    let grid_report = VerificationReport {
        seed: opts.seed,
        ..grid_tally.report.clone()
    };
    let mut cert = ContractionCertificate {
        system: sys.name().into(),
        system_params: SystemParams::default(),
        spec,
        param,
        grid_size: opts.grid_size,
        grid_seed: opts.seed,
        status: CertificateStatus::Infeasible,
        report: grid_report.clone(),
    };
    let worst_point = grid_tally.worst_point.map(|i| grid_points[i].clone());

    if let Some(reason) = reason {
        return Ok(Synthesis::Infeasible(InfeasibleReport {
            reason,
            iterations,
            objective: eval.objective,
            grid_report,
            dense_report: None,
            worst_point,
            worst_condition: grid_tally.worst_condition,
            best: cert,
        }));
    }

    let dense_seed = opts.seed.wrapping_add(1);
    let dense_points = m.sample_points(opts.grid_size * opts.dense_factor.max(1), dense_seed);
    let dense = evaluate_points(&cert.param, sys, &spec, &dense_points, dense_seed)?;
    cert.report = dense.report.clone();
    if dense.report.pass {
        cert.status = CertificateStatus::Verified;
        Ok(Synthesis::Certified {
            certificate: cert,
            iterations,
            grid_report,
        })
    } else {
        Ok(Synthesis::Infeasible(InfeasibleReport {
            reason: InfeasibleReason::DenseVerificationFailed,
            iterations,
            objective: eval.objective,
            grid_report,
            dense_report: Some(dense.report),
            worst_point: dense.worst_point.map(|i| dense_points[i].clone()),
            worst_condition: dense.worst_condition,
            best: cert,
        }))
    }
}
