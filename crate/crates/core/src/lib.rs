//! Control contraction metrics (CCM) for control-affine systems whose state
//! evolves on a matrix Lie group embedded in Euclidean space.
//!
//! The crate is `no_std` (it needs `alloc`) and contains only the numerical
//! machinery:
//!
//! - [`manifold`]: the group catalog (ℝⁿ, O(2)×ℝ, SO(3), SE(3)) viewed as
//!   constraint sets `h(x) = 0`, with tangent frames, projectors, retraction
//!   and seeded sampling.
//! - [`systems`]: control-affine dynamics `ẋ = f(x,t) + B(x,t)u`, their
//!   Jacobians and the reduced operators `E`, `S_f`, `S_{b_i}`.
//! - [`synthesis`]: the convex search for the reduced dual metric `W` and the
//!   multiplier `ρ`, certificate verification and metric recovery.
//! - [`controller`]: the path-integral tracking controller and its
//!   sampled-data loop.
//! - [`geodesics`]: matrix exp/log geodesics, discrete energy minimisation
//!   and distance-equivalence checks.
//! - [`sdpa`]: assembly of the sampled feasibility problem as block LMIs.
//!
//! File formats and the command line live in the `lieccm-tools` crate.

#![no_std]
// Float math goes through `num_traits::Float` (libm). Whenever std is in the
// dependency graph its inherent float methods shadow the trait, so each
// import carries its own `allow(unused_imports)`.

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod controller;
pub mod error;
pub mod geodesics;
pub mod linalg;
pub mod manifold;
pub mod sdpa;
pub mod synthesis;
pub mod systems;

pub use error::{Error, Result};
pub use linalg::{Matrix, Vector};
pub use manifold::{Component, EmbeddedManifold, Group};
pub use systems::{BuiltinSystem, ControlAffineSystem, SystemParams};
