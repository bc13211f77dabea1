//! Path-integral tracking controller. A curve `x(t, s)`, `s ∈ [0, 1]`, joins
//! the reference (`s = 0`) to the plant (`s = 1`); the control along it
//! solves `∂u/∂s = −½ ρ Bᵀ M ∂x/∂s` with `u(t, 0) = u⋆(t)`, and every node
//! of the curve is driven by its own control. The sampled-data loop
//! re-initialises the curve from a group geodesic every `T` seconds.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{check_len, Error, Result};
use crate::geodesics::{curve_energy, group_distance, group_geodesic};
use crate::linalg::{Matrix, Vector};
use crate::manifold::EmbeddedManifold;
use crate::synthesis::ContractionCertificate;
use crate::systems::ControlAffineSystem;

/// Below this `b`, a positive `a` cannot be compensated.
pub const EPS_B: f64 = 1e-12;
pub const DEFAULT_SEGMENTS: usize = 16;
/// Step of the central difference for `D_f M`.
pub const METRIC_DERIVATIVE_STEP: f64 = 1e-5;
/// Tolerance of the reference feasibility check.
pub const REFERENCE_TOL: f64 = 1e-6;

/// `ρ = 0` for `a ≤ 0`, else `(a + √(a² + b²))/b`, so that
/// `a − ρb = −√(a² + b²)` whenever `a > 0`.
pub fn rho_gain(a: f64, b: f64) -> Result<f64> {
    if !(b >= 0.0) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidParameter {
            name: "b",
            reason: "need finite a and b >= 0".into(),
        });
    }
    if a <= 0.0 {
        return Ok(0.0);
    }
    if b < EPS_B {
        return Err(Error::CertificateViolation { a, b, node: None });
    }
    Ok((a + (a * a + b * b).sqrt()) / b)
}

/// Metric and drift data needed for the gain at one point.
struct LocalData {
    m: Matrix,
    b: Matrix,
    a_form: Matrix,
}

fn local_data(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    x: &Vector,
    t: f64,
) -> Result<LocalData> {
    let man = sys.manifold();
    let m = cert.metric_at(man, x, t)?;
    let j = sys.drift_jacobian(x, t);
    let f = sys.drift(x, t);
    let f_norm = f.norm();
    let mut form = &m * &j + j.transpose() * &m + &m * (2.0 * cert.lambda());
    if f_norm > 0.0 {
        let dir = &f / f_norm;
        let h = METRIC_DERIVATIVE_STEP;
        let plus = man.retract(&(x + &dir * h))?;
        let minus = man.retract(&(x - &dir * h))?;
        let d = (cert.metric_at(man, &plus, t)? - cert.metric_at(man, &minus, t)?) * (f_norm / (2.0 * h));
        form += d;
    }
    Ok(LocalData {
        m,
        b: sys.input_matrix(x, t),
        a_form: form,
    })
}

/// `a = δxᵀ(D_f M + M ∂f/∂x + ∂f/∂xᵀ M + 2λM)δx` and `b = ‖BᵀMδx‖²` at
/// `x`, with `δx` first projected onto `T_xM`.
pub fn ab_values(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    x: &Vector,
    dx: &Vector,
    t: f64,
) -> Result<(f64, f64)> {
    let v = sys.manifold().tangent_projection(x, dx)?;
    if v.iter().all(|c| *c == 0.0) {
        return Ok((0.0, 0.0));
    }
    let d = local_data(cert, sys, x, t)?;
    Ok((v.dot(&(&d.a_form * &v)), (d.b.transpose() * (&d.m * &v)).norm_squared()))
}

/// Nodes `x_0 … x_N` of the curve from reference to plant and the control
/// applied at each node.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscretizedPath {
    pub nodes: Vec<Vector>,
    pub controls: Vec<Vector>,
    pub t: f64,
}

impl DiscretizedPath {
    /// Path through `nodes` with every control set to `u_star`.
    pub fn new(nodes: Vec<Vector>, u_star: &Vector, t: f64) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::InvalidParameter {
                name: "nodes",
                reason: "a path needs at least one segment".into(),
            });
        }
        let controls = vec![u_star.clone(); nodes.len()];
        Ok(Self { nodes, controls, t })
    }

    pub fn segments(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn plant(&self) -> &Vector {
        &self.nodes[self.nodes.len() - 1]
    }

    pub fn plant_control(&self) -> &Vector {
        &self.controls[self.controls.len() - 1]
    }
}

/// Cumulative control pass `u_{j+1} = u_j − ½ ρ_j B_jᵀ M_j δx_j Δs`,
/// `u_0 = u⋆`, with `δx_j` the tangent part of `(x_{j+1} − x_j)/Δs` at the
/// retracted segment midpoint, where `M_j`, `B_j`, `ρ_j` are evaluated.
pub fn compute_controls(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    path: &mut DiscretizedPath,
    u_star: &Vector,
) -> Result<()> {
    check_len("reference control", sys.input_dim(), u_star.len())?;
    let man = sys.manifold();
    let n = path.segments();
    let ds = 1.0 / n as f64;
    let t = path.t;
    path.controls[0] = u_star.clone();
    for j in 0..n {
        let (xa, xb) = (&path.nodes[j], &path.nodes[j + 1]);
        let chord = (xb - xa) / ds;
        let mut u = path.controls[j].clone();
        if chord.iter().any(|c| *c != 0.0) {
            let mid = man.retract(&((xa + xb) * 0.5))?;
            let dx = man.tangent_projection(&mid, &chord)?;
            let norm = dx.norm();
            if norm > 0.0 {
                let data = local_data(cert, sys, &mid, t)?;
                // ρ is invariant under scaling of δx; evaluate on the unit vector.
                let v = &dx / norm;
                let a = v.dot(&(&data.a_form * &v));
                let btm = data.b.transpose() * (&data.m * &dx);
                let b = btm.norm_squared() / (norm * norm);
                let rho = rho_gain(a, b).map_err(|e| match e {
                    Error::CertificateViolation { a, b, .. } => Error::CertificateViolation {
                        a,
                        b,
                        node: Some(j),
                    },
                    other => other,
                })?;
                if rho != 0.0 {
                    u -= btm * (0.5 * rho * ds);
                }
            }
        }
        path.controls[j + 1] = u;
    }
    Ok(())
}

/// One classical RK4 step of `ẋ = f(x,t) + B(x,t)u` with `u` held, followed
/// by retraction.
pub fn rk4_step(
    sys: &ControlAffineSystem,
    x: &Vector,
    u: &Vector,
    t: f64,
    dt: f64,
) -> Result<Vector> {
    let k1 = sys.vector_field(x, u, t)?;
    let k2 = sys.vector_field(&(x + &k1 * (0.5 * dt)), u, t + 0.5 * dt)?;
    let k3 = sys.vector_field(&(x + &k2 * (0.5 * dt)), u, t + 0.5 * dt)?;
    let k4 = sys.vector_field(&(x + &k3 * dt), u, t + dt)?;
    let y = x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
    sys.manifold().retract(&y)
}

/// Advances every node by one RK4 step with its own control.
pub fn advance_path(sys: &ControlAffineSystem, path: &mut DiscretizedPath, dt: f64) -> Result<()> {
    let t = path.t;
    for (x, u) in path.nodes.iter_mut().zip(&path.controls) {
        *x = rk4_step(sys, x, u, t, dt)?;
    }
    path.t = t + dt;
    Ok(())
}

/// [`compute_controls`] followed by [`advance_path`].
pub fn open_loop_step(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    path: &mut DiscretizedPath,
    u_star: &Vector,
    dt: f64,
) -> Result<()> {
    compute_controls(cert, sys, path, u_star)?;
    advance_path(sys, path, dt)
}

/// `T = ln(K√(a₂/a₁)/k)/λ`: the period after which the per-period
/// contraction factor `K√(a₂/a₁)e^{−λT}` equals `k_target`.
pub fn sampling_period(a1: f64, a2: f64, k: f64, lambda: f64, k_target: f64) -> Result<f64> {
    if !(k_target > 0.0 && k_target < 1.0) {
        return Err(Error::InvalidParameter {
            name: "k_target",
            reason: "must lie in (0, 1)".into(),
        });
    }
    if !(a1 > 0.0 && a2 >= a1 && k >= 1.0 && lambda > 0.0) {
        return Err(Error::InvalidParameter {
            name: "a1/a2/K/lambda",
            reason: "need 0 < a1 <= a2, K >= 1, lambda > 0".into(),
        });
    }
    Ok((k * (a2 / a1).sqrt() / k_target).ln() / lambda)
}

/// A reference pair `(x⋆(t), u⋆(t))`.
pub trait Reference {
    fn state(&self, t: f64) -> Result<Vector>;
    fn control(&self, t: f64) -> Result<Vector>;
    /// Spacing of tabulated data, if any; the feasibility check never
    /// differentiates below it.
    fn resolution(&self) -> Option<f64> {
        None
    }
}

/// Reference stored as rows `(t, x⋆, u⋆)`, linearly interpolated (and
/// retracted) between rows.
#[derive(Clone, Debug, PartialEq)]
pub struct TabulatedReference {
    manifold: EmbeddedManifold,
    times: Vec<f64>,
    states: Vec<Vector>,
    controls: Vec<Vector>,
}

impl TabulatedReference {
    pub fn new(
        manifold: EmbeddedManifold,
        times: Vec<f64>,
        states: Vec<Vector>,
        controls: Vec<Vector>,
    ) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidInput("reference has no rows".into()));
        }
        check_len("reference states", times.len(), states.len())?;
        check_len("reference controls", times.len(), controls.len())?;
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("reference times must increase".into()));
        }
        for x in &states {
            check_len("reference state", manifold.n_amb(), x.len())?;
        }
        Ok(Self {
            manifold,
            times,
            states,
            controls,
        })
    }

    /// `x⋆` from RK4 with retraction under constant `u⋆`, one row per `dt`.
    pub fn integrate(
        sys: &ControlAffineSystem,
        x0: &Vector,
        u_star: &Vector,
        dt: f64,
        t_end: f64,
    ) -> Result<Self> {
        check_len("reference control", sys.input_dim(), u_star.len())?;
        if !(dt > 0.0) || !(t_end >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                reason: "need dt > 0 and t_end >= 0".into(),
            });
        }
        let steps = (t_end / dt).round() as usize;
        let mut times = Vec::with_capacity(steps + 1);
        let mut states = Vec::with_capacity(steps + 1);
        let mut x = sys.manifold().retract(x0)?;
        for k in 0..=steps {
            let t = k as f64 * dt;
            times.push(t);
            states.push(x.clone());
            if k < steps {
                x = rk4_step(sys, &x, u_star, t, dt)?;
            }
        }
        let controls = vec![u_star.clone(); times.len()];
        Self::new(sys.manifold().clone(), times, states, controls)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vector] {
        &self.states
    }

    pub fn controls(&self) -> &[Vector] {
        &self.controls
    }

    /// Index `i` with `times[i] ≤ t < times[i+1]` and the interpolation
    /// weight; exact row hits return weight 0.
    fn locate(&self, t: f64) -> (usize, f64) {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return (0, 0.0);
        }
        if t >= self.times[n - 1] {
            return (n - 1, 0.0);
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let span = self.times[i + 1] - self.times[i];
        let mut w = (t - self.times[i]) / span;
        if w <= 1e-9 {
            w = 0.0;
        } else if w >= 1.0 - 1e-9 {
            return (i + 1, 0.0);
        }
        (i, w)
    }
}

impl Reference for TabulatedReference {
    fn state(&self, t: f64) -> Result<Vector> {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            return Ok(self.states[i].clone());
        }
        self.manifold
            .retract(&(&self.states[i] * (1.0 - w) + &self.states[i + 1] * w))
    }

    fn control(&self, t: f64) -> Result<Vector> {
        let (i, w) = self.locate(t);
        if w == 0.0 {
            return Ok(self.controls[i].clone());
        }
        Ok(&self.controls[i] * (1.0 - w) + &self.controls[i + 1] * w)
    }

    fn resolution(&self) -> Option<f64> {
        let n = self.times.len();
        (n > 1).then(|| (self.times[n - 1] - self.times[0]) / (n - 1) as f64)
    }
}

/// Checks `‖ẋ⋆ − f(x⋆) − B(x⋆)u⋆‖ ≤ REFERENCE_TOL` with a five-point
/// derivative stencil at up to `checks` times in `[t0, t_end]`.
pub fn check_reference(
    sys: &ControlAffineSystem,
    reference: &dyn Reference,
    t0: f64,
    t_end: f64,
    h: f64,
    checks: usize,
) -> Result<()> {
    let h = reference.resolution().map_or(h, |r| r.max(h));
    let (lo, hi) = (t0 + 2.0 * h, t_end - 2.0 * h);
    if !(hi >= lo) || checks == 0 {
        return Ok(());
    }
    let count = checks.max(1);
    for c in 0..count {
        let t = if count == 1 {
            lo
        } else {
            lo + (hi - lo) * c as f64 / (count - 1) as f64
        };
        // Snap onto the data grid so the stencil uses exact rows.
        let t = reference
            .resolution()
            .map_or(t, |r| t0 + ((t - t0) / r).round() * r)
            .clamp(lo, hi);
        let x = reference.state(t)?;
        let xs: Vec<Vector> = [-2.0, -1.0, 1.0, 2.0]
            .iter()
            .map(|k| reference.state(t + k * h))
            .collect::<Result<_>>()?;
        let xdot = (&xs[0] - &xs[1] * 8.0 + &xs[2] * 8.0 - &xs[3]) / (12.0 * h);
        let residual = (xdot - sys.vector_field(&x, &reference.control(t)?, t)?).norm();
        if !(residual <= REFERENCE_TOL) {
            return Err(Error::InfeasibleReference { time: t, residual });
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    /// Sampling period `T`.
    pub period: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Number of path segments `N`.
    pub segments: usize,
    /// Times checked by the reference feasibility test (0 disables it).
    pub reference_checks: usize,
}

impl RunOptions {
    /// Period from [`sampling_period`] with `K = 1`, `k = 1/2`.
    pub fn auto(cert: &ContractionCertificate, dt: f64, t_end: f64) -> Result<Self> {
        let period = sampling_period(cert.spec.a1, cert.spec.a2, 1.0, cert.lambda(), 0.5)?;
        Ok(Self {
            period,
            dt,
            t_end,
            segments: DEFAULT_SEGMENTS,
            reference_checks: 50,
        })
    }
}

/// Logged closed-loop run. Row `k` is at `times[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackingTrace {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub references: Vec<Vector>,
    pub controls: Vec<Vector>,
    /// Induced-metric distance between plant and reference.
    pub distances: Vec<f64>,
    /// Energy of the current path under the certificate metric.
    pub energies: Vec<f64>,
    /// `‖h(x)‖` of the plant state.
    pub residuals: Vec<f64>,
    pub sample_times: Vec<f64>,
    /// Path energy right after each re-initialisation.
    pub sample_energies: Vec<f64>,
    pub period: f64,
    /// `max d(t)e^{λ(t−t₀)}/d(t₀)` over the first period.
    pub k_estimate: f64,
}

impl TrackingTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_distance(&self) -> f64 {
        self.distances.iter().copied().fold(0.0, f64::max)
    }

    /// Least-squares slope of `ln d` against `t` over rows with
    /// `from ≤ t ≤ to` and `d > 0`.
    pub fn log_distance_slope(&self, from: f64, to: f64) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .times
            .iter()
            .zip(&self.distances)
            .filter(|(t, d)| **t >= from && **t <= to && **d > 0.0)
            .map(|(t, d)| (*t, d.ln()))
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }

    /// Slope over the second half of the run.
    pub fn second_half_slope(&self) -> Option<f64> {
        let (t0, t1) = (*self.times.first()?, *self.times.last()?);
        self.log_distance_slope(0.5 * (t0 + t1), t1)
    }
}

/// Sampled-data tracking: at every sample time the path is rebuilt from the
/// group geodesic `x⋆(t_i) → x(t_i)` and then driven open loop until the
/// next sample. Rows are logged every `dt`, including `t_end`.
pub fn sampled_data_run(
    cert: &ContractionCertificate,
    sys: &ControlAffineSystem,
    x0: &Vector,
    reference: &dyn Reference,
    opts: &RunOptions,
) -> Result<TrackingTrace> {
    let man = sys.manifold();
    if !(opts.dt > 0.0) || !(opts.t_end >= 0.0) || !(opts.period > 0.0) || opts.segments == 0 {
        return Err(Error::InvalidParameter {
            name: "run options",
            reason: "need dt > 0, period > 0, t_end >= 0, segments >= 1".into(),
        });
    }
    check_len("initial state", man.n_amb(), x0.len())?;
    check_reference(sys, reference, 0.0, opts.t_end, opts.dt, opts.reference_checks)?;

    let steps = (opts.t_end / opts.dt).round() as usize;
    let per_sample = ((opts.period / opts.dt).round() as usize).max(1);
    let lambda = cert.lambda();
    let mut trace = TrackingTrace {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        references: Vec::with_capacity(steps + 1),
        controls: Vec::with_capacity(steps + 1),
        distances: Vec::with_capacity(steps + 1),
        energies: Vec::with_capacity(steps + 1),
        residuals: Vec::with_capacity(steps + 1),
        sample_times: Vec::new(),
        sample_energies: Vec::new(),
        period: per_sample as f64 * opts.dt,
        k_estimate: 1.0,
    };

    let mut x = x0.clone();
    let mut path: Option<DiscretizedPath> = None;
    for k in 0..=steps {
        let t = k as f64 * opts.dt;
        let x_ref = reference.state(t)?;
        let u_ref = reference.control(t)?;
        if k % per_sample == 0 {
            let curve = group_geodesic(man, &x_ref, &x, opts.segments + 1)?;
            let p = DiscretizedPath::new(curve.points, &u_ref, t)?;
            let energy = curve_energy(man, &p.nodes, cert)?;
            trace.sample_times.push(t);
            trace.sample_energies.push(energy);
            path = Some(p);
        }
        let p = path.as_mut().expect("path initialised at k = 0");
        // Node 0 follows the reference; keep it pinned to the table.
        p.nodes[0] = x_ref.clone();
        p.t = t;
        compute_controls(cert, sys, p, &u_ref)?;

        trace.times.push(t);
        trace.distances.push(group_distance(man, &x_ref, &x)?);
        trace.energies.push(curve_energy(man, &p.nodes, cert)?);
        trace.residuals.push(man.residual_norm(&x)?);
        trace.controls.push(p.plant_control().clone());
        trace.states.push(x.clone());
        trace.references.push(x_ref);

        if k < steps {
            advance_path(sys, p, opts.dt)?;
            x = p.plant().clone();
        }
    }

    let d0 = trace.distances[0];
    if d0 > 0.0 {
        trace.k_estimate = trace
            .times
            .iter()
            .zip(&trace.distances)
            .take_while(|(t, _)| **t <= trace.period)
            .map(|(t, d)| d * (lambda * t).exp() / d0)
            .fold(1.0, f64::max);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{LmiSpec, MetricParameterization};
    use crate::systems::{builtin_system, SystemParams};

    fn scalar_cert() -> (ControlAffineSystem, ContractionCertificate) {
        let sys = builtin_system("scalar-linear", &SystemParams::default()).unwrap();
        let cert = ContractionCertificate::new(
            "scalar-linear",
            SystemParams::default(),
            LmiSpec::new(0.5),
            MetricParameterization::constant(Matrix::from_element(1, 1, 1.0), 0.0),
        );
        (sys, cert)
    }

    #[test]
    fn gain_examples() {
        assert_eq!(rho_gain(-1.0, 0.3).unwrap(), 0.0);
        assert_eq!(rho_gain(3.0, 4.0).unwrap(), 2.0);
        assert_eq!(rho_gain(0.0, 1.0).unwrap(), 0.0);
        assert!(matches!(
            rho_gain(1.0, 0.0),
            Err(Error::CertificateViolation { .. })
        ));
    }

    #[test]
    fn scalar_ab_by_hand() {
        let (sys, cert) = scalar_cert();
        let x = Vector::from_element(1, 0.7);
        let (a, b) = ab_values(&cert, &sys, &x, &Vector::from_element(1, 1.0), 0.0).unwrap();
        assert!((a + 1.0).abs() < 1e-12);
        assert!((b - 1.0).abs() < 1e-12);
        assert_eq!(
            ab_values(&cert, &sys, &x, &Vector::zeros(1), 0.0).unwrap(),
            (0.0, 0.0)
        );
    }

    #[test]
    fn period_formula() {
        assert!((sampling_period(1.0, 1.0, 1.0, 1.0, (-1.0f64).exp()).unwrap() - 1.0).abs() < 1e-15);
        let t = sampling_period(1.0, 4.0, 1.0, 1.0, 1.0 - 1e-12).unwrap();
        assert!((t - 2.0f64.ln()).abs() < 1e-11);
        assert!(sampling_period(1.0, 4.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn zero_length_path_keeps_reference_control() {
        let (sys, cert) = scalar_cert();
        let x = Vector::from_element(1, 0.4);
        let u = Vector::from_element(1, 0.2);
        let mut path = DiscretizedPath::new(vec![x.clone(); 5], &u, 0.0).unwrap();
        open_loop_step(&cert, &sys, &mut path, &u, 1e-2).unwrap();
        assert!(path.controls.iter().all(|c| c == &u));
        assert!(path.nodes.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn tabulated_lookup_hits_rows_exactly() {
        let (sys, _) = scalar_cert();
        let r = TabulatedReference::integrate(
            &sys,
            &Vector::from_element(1, 1.0),
            &Vector::from_element(1, 0.0),
            0.1,
            1.0,
        )
        .unwrap();
        assert_eq!(r.state(0.3).unwrap(), r.states()[3]);
        let mid = r.state(0.35).unwrap()[0];
        assert!((mid - 0.5 * (r.states()[3][0] + r.states()[4][0])).abs() < 1e-15);
    }
}
