//! Lagrangian solid–fluid coupling.
//!
//! Weakly compressible SPH fluids and linear-element FEM solids are advanced with
//! optimization-based implicit Euler. Solid–fluid and solid–solid interaction is
//! modelled with smooth log barriers (non-penetration is enforced by
//! continuous-collision-filtered line search) and lagged friction. The time
//! integrator offers a monolithic scheme plus three operator-splitting schemes,
//! two of which stabilize the split with a quadratic contact proxy.
//!
//! The crate is dimension generic: every simulation type carries a `const D: usize`
//! that must be 2 or 3.

pub mod contact;
pub mod energy;
pub mod error;
pub mod fluid;
pub mod integrator;
pub mod kernels;
pub mod linsolve;
pub mod neighbors;
pub(crate) mod small;
pub mod scene;
pub mod solid;

pub use error::{Error, Result};

/// Point or displacement in `D` dimensions.
pub type Vector<const D: usize> = nalgebra::SVector<f64, D>;
/// Square `D x D` matrix, the block unit of every Hessian in the crate.
pub type Matrix<const D: usize> = nalgebra::SMatrix<f64, D, D>;

pub(crate) fn assert_dim<const D: usize>() {
    assert!(D == 2 || D == 3, "only 2D and 3D simulations are supported (got D = {D})");
}
