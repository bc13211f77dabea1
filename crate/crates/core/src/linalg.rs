//! Small dense linear-algebra helpers shared by the other modules.

use alloc::vec::Vec;
use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(f64::total_cmp);
    ev
}

pub fn max_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m)
        .last()
        .copied()
        .unwrap_or(f64::NEG_INFINITY)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    sym_eigenvalues(m).first().copied().unwrap_or(f64::INFINITY)
}

/// Positive part of the symmetric matrix `m + shift·I` together with its
/// squared Frobenius norm. `‖(X)₊‖²` is C¹ in `X` with gradient `2(X)₊`.
pub fn positive_part(m: &Matrix, shift: f64) -> (Matrix, f64) {
    let n = m.nrows();
    let mut shifted = symmetrize(m);
    for i in 0..n {
        shifted[(i, i)] += shift;
    }
    let eig = SymmetricEigen::new(shifted);
    let mut out = Matrix::zeros(n, n);
    let mut norm2 = 0.0;
    for (k, &mu) in eig.eigenvalues.iter().enumerate() {
        if mu > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) * mu;
            norm2 += mu * mu;
        }
    }
    (out, norm2)
}

/// Inverse of a symmetric positive definite matrix, or `None` when the
/// Cholesky factorisation fails.
pub fn spd_inverse(m: &Matrix) -> Option<Matrix> {
    Cholesky::new(symmetrize(m)).map(|c| c.inverse())
}

/// Spectral norm.
pub fn operator_norm(m: &Matrix) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .fold(0.0, f64::max)
}

/// Row-major `order × order` block stored at the start of `x`.
pub fn rotation_block(x: &Vector, order: usize) -> Matrix {
    Matrix::from_fn(order, order, |i, j| x[i * order + j])
}

pub fn write_rotation_block(x: &mut Vector, r: &Matrix) {
    let order = r.nrows();
    for i in 0..order {
        for j in 0..order {
            x[i * order + j] = r[(i, j)];
        }
    }
}

/// Row-major vectorisation.
pub fn vec_row_major(m: &Matrix) -> Vector {
    let (rows, cols) = m.shape();
    Vector::from_fn(rows * cols, |k, _| m[(k / cols, k % cols)])
}

/// Orthonormal basis (Frobenius inner product) of the skew-symmetric
/// `order × order` matrices: `(e_i e_jᵀ − e_j e_iᵀ)/√2` for `i < j` in
/// lexicographic order.
pub fn skew_basis(order: usize) -> Vec<Matrix> {
    let c = 1.0 / 2.0.sqrt();
    let mut out = Vec::new();
    for i in 0..order {
        for j in (i + 1)..order {
            let mut e = Matrix::zeros(order, order);
            e[(i, j)] = c;
            e[(j, i)] = -c;
            out.push(e);
        }
    }
    out
}

/// Orthonormal basis of the symmetric `n × n` matrices: `E_ii`, then
/// `(E_ij + E_ji)/√2` for `i < j`.
pub fn symmetric_basis(n: usize) -> Vec<Matrix> {
    let c = 1.0 / 2.0.sqrt();
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        let mut e = Matrix::zeros(n, n);
        e[(i, i)] = 1.0;
        out.push(e);
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = Matrix::zeros(n, n);
            e[(i, j)] = c;
            e[(j, i)] = c;
            out.push(e);
        }
    }
    out
}

/// Nearest orthogonal matrix to `a` (polar factor). With `special`, the
/// result is forced into SO(n) by flipping the direction of the smallest
/// singular value when `det(a) < 0`.
pub fn polar_factor(a: &Matrix, special: bool) -> Result<Matrix> {
    let n = a.nrows();
    let svd = a.clone().svd(true, true);
    let (Some(mut u), Some(v_t)) = (svd.u, svd.v_t) else {
        return Err(Error::Degenerate {
            what: "rotation block",
        });
    };
    let sv = &svd.singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let (imin, smin) = sv
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, s)| if s < acc.1 { (i, s) } else { acc });
    if n == 0 {
        return Ok(a.clone());
    }
    if smax == 0.0 || !(smin > 1e-12 * smax) {
        return Err(Error::Degenerate {
            what: "rotation block",
        });
    }
    let mut q = &u * &v_t;
    if special && q.determinant() < 0.0 {
        for r in 0..n {
            u[(r, imin)] = -u[(r, imin)];
        }
        q = &u * &v_t;
    }
    Ok(q)
}

/// Orthonormal basis (as columns) of the null space of a symmetric positive
/// semidefinite Gram matrix. Eigenvalues below `max(rel_tol·λ_max, abs_tol)`
/// count as zero.
pub fn null_space_basis(gram: &Matrix, rel_tol: f64, abs_tol: f64) -> Matrix {
    let n = gram.nrows();
    let eig = SymmetricEigen::new(symmetrize(gram));
    let top = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let cut = (rel_tol * top).max(abs_tol);
    if top <= f64::MIN_POSITIVE || top <= cut {
        return Matrix::identity(n, n);
    }
    let cols: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k] <= cut)
        .collect();
    Matrix::from_fn(n, cols.len(), |i, c| eig.eigenvectors[(i, cols[c])])
}

/// Orthogonal projector onto the null space of a Gram matrix, see
/// [`null_space_basis`].
pub fn null_space_projector(gram: &Matrix, rel_tol: f64, abs_tol: f64) -> Matrix {
    let b = null_space_basis(gram, rel_tol, abs_tol);
    &b * b.transpose()
}

/// Square root and inverse square root of a symmetric positive definite
/// matrix, or `None` if it is not positive definite.
pub fn spd_sqrt_inv(m: &Matrix) -> Option<Matrix> {
    let eig = SymmetricEigen::new(symmetrize(m));
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return None;
    }
    let d = Matrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Some(&eig.eigenvectors * d * eig.eigenvectors.transpose())
}
