//! Geodesics on the group catalog: closed-form one-parameter subgroups for
//! the induced metric, discrete energy minimisation under other metrics,
//! and the distance sandwich `√a₁ d₁ ≤ d₂ ≤ √a₂ d₁` for `a₁g₁ ⪯ g₂ ⪯ a₂g₁`.

use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::linalg::{spd_sqrt_inv, sym_eigenvalues, Matrix, Vector};
use crate::manifold::{EmbeddedManifold, MANIFOLD_TOL};
use crate::synthesis::ContractionCertificate;

/// Rotations closer than this to angle π are rejected.
pub const CUT_LOCUS_GUARD: f64 = 1e-6;
/// Stop when the discrete-energy gradient norm falls below this.
pub const GRADIENT_TOL: f64 = 1e-8;
const GRADIENT_STEP: f64 = 1e-6;

/// Riemannian metric on the embedded manifold, returned as an ambient
/// `n_amb × n_amb` matrix acting on tangent vectors.
pub trait Metric {
    fn matrix(&self, m: &EmbeddedManifold, x: &Vector) -> Result<Matrix>;
}

impl<T: Metric + ?Sized> Metric for &T {
    fn matrix(&self, m: &EmbeddedManifold, x: &Vector) -> Result<Matrix> {
        (**self).matrix(m, x)
    }
}

/// Metric inherited from the ambient Euclidean space: the orthogonal
/// projector onto `T_xM`.
#[derive(Clone, Copy, Debug, Default)]
pub struct InducedMetric;

impl Metric for InducedMetric {
    fn matrix(&self, m: &EmbeddedManifold, x: &Vector) -> Result<Matrix> {
        let s = m.frame(x)?;
        Ok(m.projector(x)? * s.transpose())
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ScaledMetric<M> {
    pub inner: M,
    pub factor: f64,
}

impl<M: Metric> Metric for ScaledMetric<M> {
    fn matrix(&self, m: &EmbeddedManifold, x: &Vector) -> Result<Matrix> {
        Ok(self.inner.matrix(m, x)? * self.factor)
    }
}

/// Position-independent ambient metric.
#[derive(Clone, Debug)]
pub struct ConstantMetric(pub Matrix);

impl Metric for ConstantMetric {
    fn matrix(&self, _m: &EmbeddedManifold, _x: &Vector) -> Result<Matrix> {
        Ok(self.0.clone())
    }
}

impl Metric for ContractionCertificate {
    fn matrix(&self, m: &EmbeddedManifold, x: &Vector) -> Result<Matrix> {
        self.metric_at(m, x, 0.0)
    }
}

fn check_rotation(r: &Matrix) -> Result<()> {
    let n = r.nrows();
    let residual = (r.transpose() * r - Matrix::identity(n, n)).norm();
    if residual > MANIFOLD_TOL {
        return Err(Error::OffManifold { residual });
    }
    if r.determinant() < 0.0 {
        return Err(Error::ComponentMismatch);
    }
    Ok(())
}

/// Exponential of a 2×2 or 3×3 skew-symmetric matrix.
pub fn so_exp(a: &Matrix) -> Matrix {
    match a.nrows() {
        2 => {
            let th = a[(1, 0)];
            let (s, c) = (th.sin(), th.cos());
            Matrix::from_row_slice(2, 2, &[c, -s, s, c])
        }
        3 => {
            let w = [a[(2, 1)], a[(0, 2)], a[(1, 0)]];
            let th2 = w[0] * w[0] + w[1] * w[1] + w[2] * w[2];
            let th = th2.sqrt();
            let (c1, c2) = if th < 1e-4 {
                (1.0 - th2 / 6.0 + th2 * th2 / 120.0, 0.5 - th2 / 24.0 + th2 * th2 / 720.0)
            } else {
                (th.sin() / th, (1.0 - th.cos()) / th2)
            };
            Matrix::identity(3, 3) + a * c1 + a * a * c2
        }
        n => {
            // Not needed by the catalog; truncated Taylor series after scaling.
            let norm = a.norm();
            let mut k = 0;
            while norm / ((1u64 << k) as f64) > 0.25 {
                k += 1;
            }
            let b = a / ((1u64 << k) as f64);
            let mut term = Matrix::identity(n, n);
            let mut sum = term.clone();
            for i in 1..20 {
                term = &term * &b / i as f64;
                sum += &term;
            }
            for _ in 0..k {
                sum = &sum * &sum;
            }
            sum
        }
    }
}

/// Rotation angle in `[0, π]` of a 2×2 or 3×3 rotation.
pub fn rotation_angle(r: &Matrix) -> f64 {
    match r.nrows() {
        2 => (r[(1, 0)] - r[(0, 1)]).atan2(r[(0, 0)] + r[(1, 1)]).abs(),
        _ => {
            let a = (r - r.transpose()) * 0.5;
            let s = (a[(2, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 0)].powi(2)).sqrt();
            s.atan2((r.trace() - 1.0) * 0.5)
        }
    }
}

/// Principal logarithm of a rotation (angle below `π − CUT_LOCUS_GUARD`).
pub fn matrix_log_rotation(r: &Matrix) -> Result<Matrix> {
    check_rotation(r)?;
    let angle = rotation_angle(r);
    if angle > core::f64::consts::PI - CUT_LOCUS_GUARD {
        return Err(Error::CutLocus { angle });
    }
    match r.nrows() {
        2 => {
            let th = (r[(1, 0)] - r[(0, 1)]).atan2(r[(0, 0)] + r[(1, 1)]);
            Ok(Matrix::from_row_slice(2, 2, &[0.0, -th, th, 0.0]))
        }
        3 => {
            let a = (r - r.transpose()) * 0.5;
            let factor = if angle < 1e-4 {
                1.0 + angle * angle / 6.0 + 7.0 * angle.powi(4) / 360.0
            } else {
                angle / angle.sin()
            };
            Ok(a * factor)
        }
        _ => Err(Error::NotImplemented("matrix logarithm beyond SO(3)")),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeodesicCurve {
    pub params: Vec<f64>,
    pub points: Vec<Vector>,
    /// Length under the metric the curve was built for.
    pub length: f64,
    /// `L²` for closed-form curves; the discrete segment energy
    /// `Σ d_jᵀ M̄_j d_j / Δs` for minimised ones.
    pub energy: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl GeodesicCurve {
    pub fn n_samples(&self) -> usize {
        self.points.len()
    }

    /// Arc length from the start to each sample, `s·L`. Both the closed-form
    /// and the energy-minimising curves are parameterised at constant speed.
    pub fn cumulative_lengths(&self) -> Vec<f64> {
        self.params.iter().map(|s| s * self.length).collect()
    }
}

fn check_on(m: &EmbeddedManifold, x: &Vector) -> Result<()> {
    let residual = m.residual_norm(x)?;
    if residual > MANIFOLD_TOL {
        return Err(Error::OffManifold { residual });
    }
    Ok(())
}

/// Relative rotation log and vector increment between two points.
fn relative_log(m: &EmbeddedManifold, p1: &Vector, p2: &Vector) -> Result<(Option<Matrix>, Vector)> {
    check_on(m, p1)?;
    check_on(m, p2)?;
    let dv = m.vector_part(p2) - m.vector_part(p1);
    let log = match (m.rotation_part(p1), m.rotation_part(p2)) {
        (Some(r1), Some(r2)) => {
            if r1 == r2 {
                return Ok((Some(Matrix::zeros(r1.nrows(), r1.ncols())), dv));
            }
            let rel = r1.transpose() * r2;
            if rel.determinant() < 0.0 {
                return Err(Error::ComponentMismatch);
            }
            Some(matrix_log_rotation(&rel)?)
        }
        _ => None,
    };
    Ok((log, dv))
}

/// Induced-metric distance `√(‖log(R₁ᵀR₂)‖_F² + ‖v₂ − v₁‖²)`.
pub fn group_distance(m: &EmbeddedManifold, p1: &Vector, p2: &Vector) -> Result<f64> {
    let (log, dv) = relative_log(m, p1, p2)?;
    let rot = log.map_or(0.0, |l| l.norm_squared());
    Ok((rot + dv.norm_squared()).sqrt())
}

/// `s ↦ (R₁ exp(s·log(R₁ᵀR₂)), (1−s)v₁ + s·v₂)` sampled at `n_samples`
/// uniform parameters. The end samples are the query points themselves.
pub fn group_geodesic(
    m: &EmbeddedManifold,
    p1: &Vector,
    p2: &Vector,
    n_samples: usize,
) -> Result<GeodesicCurve> {
    if n_samples < 2 {
        return Err(Error::InvalidParameter {
            name: "n_samples",
            reason: "need at least 2 samples".into(),
        });
    }
    let (log, dv) = relative_log(m, p1, p2)?;
    let r1 = m.rotation_part(p1);
    let v1 = m.vector_part(p1);
    let last = n_samples - 1;
    let params: Vec<f64> = (0..n_samples).map(|j| j as f64 / last as f64).collect();
    let mut points = Vec::with_capacity(n_samples);
    for (j, &s) in params.iter().enumerate() {
        if j == 0 {
            points.push(p1.clone());
        } else if j == last {
            points.push(p2.clone());
        } else {
            let r = match (&r1, &log) {
                (Some(r1), Some(l)) => Some(r1 * so_exp(&(l * s))),
                _ => None,
            };
            points.push(m.assemble(r.as_ref(), &(&v1 + &dv * s))?);
        }
    }
    let length = (log.map_or(0.0, |l| l.norm_squared()) + dv.norm_squared()).sqrt();
    Ok(GeodesicCurve {
        params,
        points,
        length,
        energy: length * length,
        converged: true,
        iterations: 0,
    })
}

/// Trapezoidal `∫₀¹ γ′ᵀ M(γ) γ′ ds` over uniformly spaced samples, with
/// second-order difference tangents.
pub fn curve_energy(m: &EmbeddedManifold, points: &[Vector], metric: &dyn Metric) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Ok(0.0);
    }
    let ds = 1.0 / (n - 1) as f64;
    let mut energy = 0.0;
    for j in 0..n {
        let d = if n == 2 {
            (&points[1] - &points[0]) / ds
        } else if j == 0 {
            ((&points[1] - &points[0]) * 4.0 - (&points[2] - &points[0])) / (2.0 * ds)
        } else if j == n - 1 {
            ((&points[n - 1] - &points[n - 2]) * 3.0 - (&points[n - 2] - &points[n - 3])) / (2.0 * ds)
        } else {
            (&points[j + 1] - &points[j - 1]) / (2.0 * ds)
        };
        if d.iter().all(|v| *v == 0.0) {
            continue;
        }
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        let mm = metric.matrix(m, &points[j])?;
        energy += w * ds * d.dot(&(mm * &d));
    }
    Ok(energy)
}

/// Segment form used by the minimiser: energy `Σ dᵀM̄d/Δs` and length
/// `Σ √(dᵀM̄d)` with `M̄` the mean of the endpoint metrics.
fn segment_terms(points: &[Vector], metrics: &[Matrix]) -> (f64, f64) {
    let ds = 1.0 / (points.len() - 1) as f64;
    let mut energy = 0.0;
    let mut length = 0.0;
    for j in 0..points.len() - 1 {
        let q = segment_quad(&points[j], &points[j + 1], &metrics[j], &metrics[j + 1]);
        energy += q / ds;
        length += q.max(0.0).sqrt();
    }
    (energy, length)
}

fn segment_quad(a: &Vector, b: &Vector, ma: &Matrix, mb: &Matrix) -> f64 {
    let d = b - a;
    0.5 * (d.dot(&(ma * &d)) + d.dot(&(mb * &d)))
}

/// Discrete geodesic under `metric`: gradient descent on the segment energy
/// over interior nodes in tangent coordinates, retracting after each step,
/// initialised from [`group_geodesic`]. Never returns a curve with higher
/// energy than the initialiser; `converged` is false if `max_iters` ran out.
pub fn minimize_energy(
    m: &EmbeddedManifold,
    p1: &Vector,
    p2: &Vector,
    metric: &dyn Metric,
    n_samples: usize,
    max_iters: usize,
) -> Result<GeodesicCurve> {
    let init = group_geodesic(m, p1, p2, n_samples)?;
    let mut points = init.points;
    let params = init.params;
    let n = points.len();
    let ds = 1.0 / (n - 1) as f64;
    let mut metrics: Vec<Matrix> = points
        .iter()
        .map(|x| metric.matrix(m, x))
        .collect::<Result<_>>()?;
    let (mut energy, mut length) = segment_terms(&points, &metrics);
    let mut step = 0.25 * ds;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iters && n > 2 {
        let frames: Vec<Matrix> = points[1..n - 1]
            .iter()
            .map(|x| m.frame(x))
            .collect::<Result<_>>()?;
        let mut grad = Vec::with_capacity(n - 2);
        let mut g2 = 0.0;
        for j in 1..n - 1 {
            let s = &frames[j - 1];
            let mut g = Vector::zeros(s.ncols());
            for k in 0..s.ncols() {
                let mut local = [0.0; 2];
                for (slot, sign) in [(0, 1.0), (1, -1.0)] {
                    let x = m.retract(&(&points[j] + s.column(k) * (sign * GRADIENT_STEP)))?;
                    let mx = metric.matrix(m, &x)?;
                    local[slot] = (segment_quad(&points[j - 1], &x, &metrics[j - 1], &mx)
                        + segment_quad(&x, &points[j + 1], &mx, &metrics[j + 1]))
                        / ds;
                }
                g[k] = (local[0] - local[1]) / (2.0 * GRADIENT_STEP);
            }
            g2 += g.norm_squared();
            grad.push(g);
        }
        if g2.sqrt() <= GRADIENT_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut accepted = false;
        while step > 1e-16 {
            let mut trial = points.clone();
            for j in 1..n - 1 {
                trial[j] = m.retract(&(&points[j] - &frames[j - 1] * &grad[j - 1] * step))?;
            }
            let trial_metrics: Vec<Matrix> = trial
                .iter()
                .map(|x| metric.matrix(m, x))
                .collect::<Result<_>>()?;
            let (e, l) = segment_terms(&trial, &trial_metrics);
            if e <= energy - 1e-4 * step * g2 {
                points = trial;
                metrics = trial_metrics;
                energy = e;
                length = l;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 2.0;
    }
    if n == 2 {
        converged = true;
    }
    Ok(GeodesicCurve {
        params,
        points,
        length,
        energy,
        converged,
        iterations,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Lemma1Report {
    /// `a₁g₁ ⪯ g₂ ⪯ a₂g₁` held at every sampled point.
    pub premise_holds: bool,
    /// Extreme generalized eigenvalues of `g₂` against `g₁` over the samples.
    pub premise_min: f64,
    pub premise_max: f64,
    /// `(d₁, d₂)` per pair.
    pub distances: Vec<(f64, f64)>,
    /// `max (√a₁d₁ − d₂ − slack)` and `max (d₂ − √a₂d₁ − slack)`; both must
    /// be `≤ 0`.
    pub worst_lower: f64,
    pub worst_upper: f64,
    pub pass: bool,
}

/// Generalized eigenvalues of `SᵀM₂S` against `SᵀM₁S` at `x`, ascending.
pub fn metric_ratio_bounds(
    m: &EmbeddedManifold,
    metric_1: &dyn Metric,
    metric_2: &dyn Metric,
    x: &Vector,
) -> Result<(f64, f64)> {
    let s = m.frame(x)?;
    let g1 = s.transpose() * metric_1.matrix(m, x)? * &s;
    let g2 = s.transpose() * metric_2.matrix(m, x)? * &s;
    let root = spd_sqrt_inv(&g1).ok_or(Error::Degenerate { what: "metric g1" })?;
    let ev = sym_eigenvalues(&(&root * g2 * &root));
    Ok((ev[0], ev[ev.len() - 1]))
}

/// Checks `√a₁ d₁ ≤ d₂ ≤ √a₂ d₁` (slack `1e−6·(1 + d₁)`) on point pairs,
/// with both distances from [`minimize_energy`]. The premise is checked at
/// the nodes of the induced geodesics between the pairs.
pub fn lemma1_check(
    m: &EmbeddedManifold,
    metric_1: &dyn Metric,
    metric_2: &dyn Metric,
    a1: f64,
    a2: f64,
    pairs: &[(Vector, Vector)],
    n_samples: usize,
    max_iters: usize,
) -> Result<Lemma1Report> {
    let mut premise_min = f64::INFINITY;
    let mut premise_max = f64::NEG_INFINITY;
    let mut distances = Vec::with_capacity(pairs.len());
    let mut worst_lower = f64::NEG_INFINITY;
    let mut worst_upper = f64::NEG_INFINITY;
    for (p, q) in pairs {
        for x in &group_geodesic(m, p, q, n_samples)?.points {
            let (lo, hi) = metric_ratio_bounds(m, metric_1, metric_2, x)?;
            premise_min = premise_min.min(lo);
            premise_max = premise_max.max(hi);
        }
        let d1 = minimize_energy(m, p, q, metric_1, n_samples, max_iters)?.length;
        let d2 = minimize_energy(m, p, q, metric_2, n_samples, max_iters)?.length;
        let slack = 1e-6 * (1.0 + d1);
        worst_lower = worst_lower.max(a1.sqrt() * d1 - d2 - slack);
        worst_upper = worst_upper.max(d2 - a2.sqrt() * d1 - slack);
        distances.push((d1, d2));
    }
    let tol = 1e-9 * (1.0 + a2.abs());
    let premise_holds = premise_min >= a1 - tol && premise_max <= a2 + tol;
    Ok(Lemma1Report {
        premise_holds,
        premise_min,
        premise_max,
        distances,
        worst_lower,
        worst_upper,
        pass: premise_holds && worst_lower <= 0.0 && worst_upper <= 0.0,
    })
}
