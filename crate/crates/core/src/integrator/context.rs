//! Per-step data shared by every phase: masses, Dirichlet targets, frozen fluid
//! coefficients, friction records and contact-pair queries.

use super::{SchemeConfig, System};
use crate::contact::{
    friction_precompute, pair_distance, solid_fluid_barrier, solid_solid_contact, BarrierParams, ContactPair, ContactSet,
    FrictionParams, FrictionRecord,
};
use crate::energy::{BlockTriplets, EnergyReport};
use crate::fluid::FluidStep;
use crate::linsolve::BlockCsr;
use crate::neighbors::{boundary_candidates, edge_edge_candidates};
use crate::solid::SolidMesh;
use crate::{Error, Result, Vector};

pub(crate) struct StepCtx<'a, const D: usize> {
    pub solid: &'a SolidMesh<D>,
    pub barrier: BarrierParams,
    pub friction_params: FrictionParams,
    pub cfg: &'a SchemeConfig,
    pub h: f64,
    pub nf: usize,
    pub mass: Vec<f64>,
    pub fixed: Vec<bool>,
    pub x_n: Vec<Vector<D>>,
    pub v_n: Vec<Vector<D>>,
    /// Position of every node at the end of the step if it were Dirichlet;
    /// only read for fixed nodes.
    pub dirichlet: Vec<Vector<D>>,
    pub gravity: Vector<D>,
    pub fluid: Option<FluidStep<D>>,
    pub friction: Vec<FrictionRecord<D>>,
    /// Largest per-iteration displacement of any node.
    pub motion_cap: f64,
    ss_points: Vec<usize>,
    node_area: Vec<f64>,
    edge_area: Vec<f64>,
}

impl<'a, const D: usize> StepCtx<'a, D> {
    pub fn new(sys: &'a System<D>, h: f64) -> Result<Self> {
        let nf = sys.fluid.len();
        let solid = &sys.solid;
        let fluid = if nf > 0 {
            let mut state = sys.fluid.clone();
            let table = state.neighbor_table();
            state.reinit_density(&table);
            Some(FluidStep::new(&state, table, &sys.fluid_params, h))
        } else {
            None
        };
        let mut mass = vec![sys.fluid.mass; nf];
        mass.extend_from_slice(&solid.masses);
        let mut fixed = vec![false; nf];
        fixed.extend_from_slice(&solid.fixed);
        let mut x_n = sys.fluid.positions.clone();
        x_n.extend_from_slice(&solid.positions);
        let mut v_n = sys.fluid.velocities.clone();
        v_n.extend_from_slice(&solid.velocities);
        let mut dirichlet = x_n.clone();
        for (a, x) in dirichlet[nf..].iter_mut().enumerate() {
            if solid.fixed[a] {
                *x += solid.prescribed_velocity[a] * h;
            }
        }
        let node_area = solid.nodal_boundary_area();
        let edge_area = if D == 3 {
            let mut area = vec![0.0; solid.boundary_edges.len()];
            for f in &solid.boundary {
                let a = SolidMesh::<D>::facet_normal(&solid.rest, f).norm() / 6.0;
                for k in 0..3 {
                    let (i, j) = (f[k], f[(k + 1) % 3]);
                    let key = [i.min(j), i.max(j)];
                    if let Ok(e) = solid.boundary_edges.binary_search(&key) {
                        area[e] += a;
                    }
                }
            }
            area
        } else {
            Vec::new()
        };
        let scale = if nf > 0 { sys.fluid.spacing } else { mean_facet_size(solid) };
        Ok(Self {
            solid,
            barrier: sys.barrier,
            friction_params: sys.friction,
            cfg: &sys.scheme,
            h,
            nf,
            mass,
            fixed,
            x_n,
            v_n,
            dirichlet,
            gravity: sys.gravity,
            fluid,
            friction: Vec::new(),
            motion_cap: 2.0 * scale.max(sys.barrier.dhat),
            ss_points: if solid.num_bodies() > 1 { solid.boundary_nodes() } else { Vec::new() },
            node_area,
            edge_area,
        })
    }

    /// Checks that `x^n` is penetration-free and lags the friction data.
    pub fn start(&mut self) -> Result<()> {
        let pairs = self.pairs(&self.x_n, self.barrier.dhat);
        if let Some(d) = self.min_distance(&self.x_n, &pairs) {
            if d <= 0.0 {
                return Err(Error::NonPositiveDistance { distance: d });
            }
        }
        if self.friction_params.mu > 0.0 {
            self.friction = friction_precompute(&self.x_n, &pairs.solid_fluid, &self.barrier)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.x_n.len()
    }

    /// `x^n + h v^n + h² g` for free nodes, the scripted position for fixed ones.
    pub fn predictor(&self) -> Vec<Vector<D>> {
        let h = self.h;
        (0..self.len())
            .map(|i| if self.fixed[i] { self.dirichlet[i] } else { self.x_n[i] + self.v_n[i] * h + self.gravity * (h * h) })
            .collect()
    }

    /// Primitive pairs with distance `< bound` at `x`.
    pub fn pairs(&self, x: &[Vector<D>], bound: f64) -> ContactSet<D> {
        let nf = self.nf;
        let solid = self.solid;
        let xs = &x[nf..];
        let mut set = ContactSet::default();
        if nf > 0 && !solid.boundary.is_empty() {
            let s_q = self.barrier.fluid_weight;
            for (p, f) in boundary_candidates(&x[..nf], xs, &solid.boundary, bound) {
                let facet = solid.boundary[f].map(|n| n + nf);
                set.solid_fluid.push(ContactPair::point_facet(p, &facet, s_q));
            }
        }
        if !self.ss_points.is_empty() {
            let pts: Vec<Vector<D>> = self.ss_points.iter().map(|&a| xs[a]).collect();
            for (pi, f) in boundary_candidates(&pts, xs, &solid.boundary, bound) {
                let a = self.ss_points[pi];
                let facet = solid.boundary[f];
                if solid.body[a] == solid.body[facet[0]] || (solid.fixed[a] && facet.iter().all(|&b| solid.fixed[b])) {
                    continue;
                }
                set.solid_solid.push(ContactPair::point_facet(a + nf, &facet.map(|n| n + nf), self.node_area[a]));
            }
            if D == 3 {
                let edges = &solid.boundary_edges;
                for (e1, e2) in edge_edge_candidates(xs, edges, bound) {
                    let (a, b) = (edges[e1], edges[e2]);
                    if solid.body[a[0]] == solid.body[b[0]] || a.iter().chain(&b).all(|&n| solid.fixed[n]) {
                        continue;
                    }
                    let w = 0.5 * (self.edge_area[e1] + self.edge_area[e2]);
                    set.solid_solid.push(ContactPair::edge_edge([a[0] + nf, a[1] + nf], [b[0] + nf, b[1] + nf], w));
                }
            }
        }
        set
    }

    pub fn min_distance(&self, x: &[Vector<D>], set: &ContactSet<D>) -> Option<f64> {
        set.solid_fluid.iter().chain(&set.solid_solid).map(|p| pair_distance(x, p)).reduce(f64::min)
    }

    /// Second-order Taylor expansion of `sf C_sf + ss C_ss` at `x^n`, with the
    /// PSD-projected pair Hessians.
    pub fn proxy(&self, sf: f64, ss: f64) -> Result<Proxy<D>> {
        let n = self.len();
        let pairs = self.pairs(&self.x_n, self.barrier.dhat);
        let mut q = Quadratic { center: self.x_n.clone(), value: 0.0, grad: vec![Vector::<D>::zeros(); n], hess: BlockTriplets::new() };
        if sf != 0.0 {
            q.add(&solid_fluid_barrier(&self.x_n, &pairs, &self.barrier, true)?, sf);
            if !self.friction.is_empty() {
                let r = crate::contact::friction_potential(&self.x_n, &self.x_n, &self.friction, &self.friction_params, self.h, true);
                q.add(&r, sf);
            }
        }
        if ss != 0.0 {
            q.add(&solid_solid_contact(&self.x_n, &pairs, &self.barrier, true)?, ss);
        }
        Ok(Proxy::new(q))
    }
}

fn mean_facet_size<const D: usize>(solid: &SolidMesh<D>) -> f64 {
    if solid.boundary.is_empty() {
        return 0.0;
    }
    let total: f64 = solid.boundary.iter().map(|f| (solid.rest[f[0]] - solid.rest[f[1]]).norm()).sum();
    total / solid.boundary.len() as f64
}

/// Quadratic `c + gᵀu + ½ uᵀ H u` with `u = x - center`.
pub(crate) struct Quadratic<const D: usize> {
    pub center: Vec<Vector<D>>,
    pub value: f64,
    pub grad: Vec<Vector<D>>,
    pub hess: BlockTriplets<D>,
}

/// A [`Quadratic`] with its Hessian compressed for fast products.
pub(crate) struct Proxy<const D: usize> {
    pub quad: Quadratic<D>,
    pub csr: BlockCsr<D>,
}

impl<const D: usize> Quadratic<D> {
    fn add(&mut self, r: &EnergyReport<D>, scale: f64) {
        self.value += scale * r.value;
        for (g, rg) in self.grad.iter_mut().zip(&r.gradient) {
            *g += rg * scale;
        }
        self.hess.extend(&r.hessian, scale);
    }
}

impl<const D: usize> Proxy<D> {
    pub fn new(quad: Quadratic<D>) -> Self {
        let csr = BlockCsr::from_triplets(quad.center.len(), &quad.hess);
        Self { quad, csr }
    }

    /// Value at `x`; adds `scale ∇` into `grad`.
    pub fn eval(&self, x: &[Vector<D>], grad: &mut [Vector<D>], scale: f64) -> f64 {
        let u: Vec<Vector<D>> = x.iter().zip(&self.quad.center).map(|(a, b)| a - b).collect();
        let hu = self.csr.mul(&u);
        let mut v = self.quad.value;
        for i in 0..u.len() {
            v += self.quad.grad[i].dot(&u[i]) + 0.5 * u[i].dot(&hu[i]);
            grad[i] += (self.quad.grad[i] + hu[i]) * scale;
        }
        scale * v
    }
}
