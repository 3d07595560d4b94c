//! Barrier contact between fluid particles and solid boundaries, solid–solid
//! contact, lagged friction and the conservative step bound used by line search.

pub mod autodiff;
pub mod barrier;
pub mod ccd;
pub mod distance;
pub mod friction;
mod potential;

use std::f64::consts::PI;

pub use barrier::{barrier, barrier_derivative, barrier_second_derivative};
pub use ccd::ccd_step_bound;
pub use friction::{friction_potential, friction_precompute, FrictionParams, FrictionRecord};
pub use potential::{barrier_hessian_exact, pair_distance, solid_fluid_barrier, solid_solid_contact, stencil_sq_derivatives};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierParams {
    /// Activation distance `d̂`.
    pub dhat: f64,
    /// Stiffness `κ`.
    pub kappa: f64,
    /// Boundary integration weight `s_q` of one fluid particle.
    pub fluid_weight: f64,
}

impl BarrierParams {
    pub fn new(dhat: f64, kappa: f64, fluid_weight: f64) -> Result<Self> {
        if !(dhat > 0.0 && dhat.is_finite()) {
            return Err(Error::validation("dhat", "must be positive"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::validation("kappa", "must be positive"));
        }
        if !(fluid_weight > 0.0 && fluid_weight.is_finite()) {
            return Err(Error::validation("fluid_weight", "must be positive"));
        }
        Ok(Self { dhat, kappa, fluid_weight })
    }

    /// Cross-section of the sphere (3D) or diameter of the disk (2D) with the
    /// particle's rest volume `v0`.
    pub fn fluid_weight_for(dim: usize, v0: f64) -> f64 {
        if dim == 3 {
            PI * (3.0 * v0 / (4.0 * PI)).powf(2.0 / 3.0)
        } else {
            2.0 * (v0 / PI).sqrt()
        }
    }

    /// Default stiffness `10⁴ k_I V_0 / d̂²`.
    pub fn default_kappa(k_incompressibility: f64, v0: f64, dhat: f64) -> f64 {
        1e4 * k_incompressibility * v0 / (dhat * dhat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PairKind {
    /// `[point, facet nodes..]`: point–segment in 2D, point–triangle in 3D.
    PointFacet,
    /// `[a0, a1, b0, b1]`, 3D only.
    EdgeEdge,
}

/// A primitive pair with global node indices; only the first `D + 1` entries
/// of `nodes` are meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactPair {
    pub kind: PairKind,
    pub nodes: [usize; 4],
    /// Quadrature weight multiplying the barrier.
    pub weight: f64,
}

impl ContactPair {
    pub fn point_facet(point: usize, facet: &[usize], weight: f64) -> Self {
        let mut nodes = [usize::MAX; 4];
        nodes[0] = point;
        nodes[1..=facet.len()].copy_from_slice(facet);
        Self { kind: PairKind::PointFacet, nodes, weight }
    }

    pub fn edge_edge(a: [usize; 2], b: [usize; 2], weight: f64) -> Self {
        Self { kind: PairKind::EdgeEdge, nodes: [a[0], a[1], b[0], b[1]], weight }
    }

    pub fn stencil(&self, dim: usize) -> &[usize] {
        &self.nodes[..dim + 1]
    }
}

/// Pairs considered by the contact potentials for one evaluation, plus the
/// friction records frozen at the start of the step.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSet<const D: usize> {
    pub solid_fluid: Vec<ContactPair>,
    pub solid_solid: Vec<ContactPair>,
    pub friction: Vec<FrictionRecord<D>>,
}

impl<const D: usize> Default for ContactSet<D> {
    fn default() -> Self {
        Self { solid_fluid: Vec::new(), solid_solid: Vec::new(), friction: Vec::new() }
    }
}
