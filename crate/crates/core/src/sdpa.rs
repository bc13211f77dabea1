//! The sampled degree-0 feasibility problem as a block-diagonal LMI in the
//! standard form `Σᵢ Fᵢ yᵢ − F₀ ⪰ 0`, ready to be written in SDPA sparse
//! format.
//!
//! Variables: coordinates of the constant `W` in an orthonormal basis of the
//! sampled Killing subspace, followed by the constant `ρ`. Blocks: one
//! `−R1 − εI ⪰ 0` per grid point, then `W − I/a₂ ⪰ 0` and `I/a₁ − W ⪰ 0`.
//! `ρ ≥ 0` needs no block since increasing `ρ` only relaxes `R1`.

use alloc::vec::Vec;


use crate::error::{Error, Result};
use crate::linalg::{symmetrize, Matrix, Vector};
use crate::synthesis::{killing_subspace, LmiSpec};
use crate::systems::ControlAffineSystem;

#[derive(Clone, Debug, PartialEq)]
pub struct SdpaProblem {
    pub block_sizes: Vec<usize>,
    /// Objective `c` (all zero: pure feasibility).
    pub c: Vec<f64>,
    /// `matrices[i][b]` is block `b` of `F_i`, `i = 0..=m`.
    pub matrices: Vec<Vec<Matrix>>,
}

impl SdpaProblem {
    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn n_blocks(&self) -> usize {
        self.block_sizes.len()
    }

    /// `Σᵢ Fᵢ yᵢ − F₀`, block by block.
    pub fn evaluate(&self, y: &Vector) -> Vec<Matrix> {
        (0..self.n_blocks())
            .map(|b| {
                let mut acc = -self.matrices[0][b].clone();
                for (i, yi) in y.iter().enumerate() {
                    acc += &self.matrices[i + 1][b] * *yi;
                }
                acc
            })
            .collect()
    }

    /// Number of `W` variables; `ρ` is the last variable.
    pub fn n_metric_vars(&self) -> usize {
        self.n_vars() - 1
    }
}

/// Assembles the problem on explicit grid points. Every block is exactly
/// symmetric, so writing only its upper triangle loses nothing. Only degree 0 is
/// supported.
pub fn sdpa_problem(
    sys: &ControlAffineSystem,
    spec: &LmiSpec,
    degree: usize,
    points: &[Vector],
) -> Result<SdpaProblem> {
    if degree != 0 {
        return Err(Error::NotImplemented("SDPA export of non-constant metrics"));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("SDPA export needs a non-empty grid".into()));
    }
    spec.validate()?;
    let n = sys.manifold().n_dim();
    let basis = killing_subspace(sys, points, spec.kill_tol)?;
    let m = basis.len() + 1;
    let eye = Matrix::identity(n, n);
    let lambda = spec.lambda;

    let mut matrices: Vec<Vec<Matrix>> = (0..=m).map(|_| Vec::new()).collect();
    let mut block_sizes = Vec::with_capacity(points.len() + 2);
    for x in points {
        let ops = sys.reduced_operators(x, 0.0)?;
        block_sizes.push(n);
        matrices[0].push(&eye * spec.margin);
        for (l, z) in basis.iter().enumerate() {
            let f = z * ops.s_f.transpose() + &ops.s_f * z + z * (2.0 * lambda);
            matrices[l + 1].push(-symmetrize(&f));
        }
        matrices[m].push(symmetrize(&(&ops.e * ops.e.transpose())));
    }
    block_sizes.push(n);
    matrices[0].push(&eye / spec.a2);
    for (l, z) in basis.iter().enumerate() {
        matrices[l + 1].push(symmetrize(z));
    }
    matrices[m].push(Matrix::zeros(n, n));
    block_sizes.push(n);
    matrices[0].push(-&eye / spec.a1);
    for (l, z) in basis.iter().enumerate() {
        matrices[l + 1].push(-symmetrize(z));
    }
    matrices[m].push(Matrix::zeros(n, n));

    Ok(SdpaProblem {
        block_sizes,
        c: alloc::vec![0.0; m],
        matrices,
    })
}
